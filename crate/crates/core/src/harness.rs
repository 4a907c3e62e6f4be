//! Experiment orchestration: per-topic rule learning, threshold tuning,
//! test-set metrics and macro-averaged report panels.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{self, BuildError, ExactMatch, GpConfig, TrainingSet};
use crate::docmodel::{build_model, DocumentModel, Resources};
use crate::evaluator::{self, LeafScore, SemanticRule};
use crate::query::{ConceptRef, Query};
use crate::relatedness::RelCache;

pub const DEFAULT_GRID_STEP: f64 = 0.05;
/// Topics with a training ratio at or below this go to panel B, above to C.
pub const TR_SPLIT: f64 = 5.0;

const REFERENCE_TABLE: &str = include_str!("../data/reference_results.csv");

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("{file}:{line}: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("document {0:?} is judged but missing from the corpus")]
    MissingDocument(String),
    #[error("grid step must lie in (0, 1), got {0}")]
    GridStep(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Precision/recall/F with zero-denominator conventions (all default to 0).
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let r = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f)
}

pub fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    prf(tp, fp, fn_).2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f_score: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// negatives / positives of the training sample
    pub tr: f64,
}

impl MetricReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, tr: f64) -> Self {
        let (precision, recall, f_score) = prf(tp, fp, fn_);
        let total = tp + fp + fn_ + tn;
        let accuracy = if total > 0 {
            (tp + tn) as f64 / total as f64
        } else {
            0.0
        };
        Self {
            f_score,
            accuracy,
            precision,
            recall,
            tp,
            fp,
            fn_,
            tn,
            tr,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Tallies (predicted, relevant) pairs.
pub fn confusion(pairs: impl IntoIterator<Item = (bool, bool)>) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (hit, rel) in pairs {
        match (hit, rel) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub c1: f64,
    pub c2: f64,
    pub f_score: f64,
    /// Number of (c1, c2) cells evaluated.
    pub cells: usize,
}

/// Points of the threshold grid: k/n for k = 0..=n, n = round(1/step).
pub fn grid_points(step: f64) -> Result<Vec<f64>, HarnessError> {
    if !(step > 0.0 && step < 1.0) {
        return Err(HarnessError::GridStep(step));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

/// Grid search over `c2 <= c1` maximizing training F-score of the full
/// semantic evaluation. Ties go to the lexicographically largest (c1, c2).
pub fn tune_thresholds(
    res: &Resources,
    query: &Query,
    train: &TrainingSet,
    grid_step: f64,
) -> Result<Tuning, HarnessError> {
    let cache = RelCache::new(&res.graph);
    let scored: Vec<(HashMap<ConceptRef, LeafScore>, bool)> = train
        .labelled()
        .map(|(m, rel)| (evaluator::score_query(res, &cache, query, m), rel))
        .collect();
    let grid = grid_points(grid_step)?;
    let mut best = Tuning {
        c1: 1.0,
        c2: 1.0,
        f_score: f64::NEG_INFINITY,
        cells: 0,
    };
    let mut cells = 0;
    for (i, &c1) in grid.iter().enumerate() {
        for &c2 in &grid[..=i] {
            cells += 1;
            let (tp, fp, fn_, _) = confusion(
                scored
                    .iter()
                    .map(|(s, rel)| (evaluator::matches_scores(query, c1, c2, s), *rel)),
            );
            let f = f_score(tp, fp, fn_);
            if f >= best.f_score {
                best = Tuning {
                    c1,
                    c2,
                    f_score: f,
                    cells: 0,
                };
            }
        }
    }
    best.cells = cells;
    Ok(best)
}

/// A labelled, modeled document.
#[derive(Debug, Clone)]
pub struct Example {
    pub doc_id: String,
    pub model: DocumentModel,
    pub relevant: bool,
}

/// Learned rule, thresholds and test metrics for one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRun {
    pub topic_id: String,
    pub rule: String,
    /// Surfaces of the rule's named-entity leaves.
    pub named_entities: Vec<String>,
    pub c1: f64,
    pub c2: f64,
    pub train_fitness: f64,
    pub train_f_score: f64,
    pub report: MetricReport,
}

/// Full pipeline for one topic: terminals, GP rule, thresholds, test metrics.
pub fn run_topic(
    res: &Resources,
    topic_id: &str,
    statement: &str,
    train: &[Example],
    test: &[Example],
    gp: &GpConfig,
    grid_step: f64,
) -> Result<TopicRun, TopicError> {
    let terminals = builder::terminal_set(res, statement)?;
    let split = |rel: bool| -> Vec<DocumentModel> {
        train
            .iter()
            .filter(|e| e.relevant == rel)
            .map(|e| e.model.clone())
            .collect()
    };
    let training = TrainingSet::new(split(true), split(false))?;
    let learned = builder::build_rule(&terminals, &training, gp, &ExactMatch::from_resources(res))?;
    let tuning = tune_thresholds(res, &learned.query, &training, grid_step)?;
    let rule = SemanticRule::new(learned.query, tuning.c1, tuning.c2)
        .expect("grid keeps c2 <= c1 within [0, 1]");

    let cache = RelCache::new(&res.graph);
    let (tp, fp, fn_, tn) = confusion(test.iter().map(|e| {
        (
            evaluator::evaluate_with(res, &cache, &rule, &e.model).matched,
            e.relevant,
        )
    }));
    let mut named_entities: Vec<String> = rule
        .query
        .leaves()
        .into_iter()
        .filter(|l| l.named_entity)
        .map(|l| l.surface.clone())
        .collect();
    named_entities.sort();
    named_entities.dedup();

    Ok(TopicRun {
        topic_id: topic_id.to_string(),
        rule: rule.query.serialize(),
        named_entities,
        c1: rule.c1(),
        c2: rule.c2(),
        train_fitness: learned.fitness,
        train_f_score: tuning.f_score,
        report: MetricReport::from_counts(tp, fp, fn_, tn, training.ratio()),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum TopicError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Macro-averaged metrics over a group of topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub topics: usize,
    pub f_score: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Panel {
    fn mean<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> Option<Self> {
        let reports: Vec<&MetricReport> = reports.into_iter().collect();
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
        Some(Panel {
            topics: reports.len(),
            f_score: avg(|r| r.f_score),
            accuracy: avg(|r| r.accuracy),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
        })
    }
}

/// Panel A: all topics; B: tr <= 5; C: tr > 5. Empty groups are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panels {
    pub all: Panel,
    pub low_ratio: Option<Panel>,
    pub high_ratio: Option<Panel>,
}

/// Macro-average per panel. Runs are ordered by topic id first, so the
/// result does not depend on input order.
pub fn aggregate(runs: &[TopicRun]) -> Result<Panels, HarnessError> {
    let mut sorted: Vec<&TopicRun> = runs.iter().collect();
    sorted.sort_by(|a, b| a.topic_id.cmp(&b.topic_id));
    let reports = || sorted.iter().map(|r| &r.report);
    Ok(Panels {
        all: Panel::mean(reports()).ok_or(HarnessError::Empty)?,
        low_ratio: Panel::mean(reports().filter(|r| r.tr <= TR_SPLIT)),
        high_ratio: Panel::mean(reports().filter(|r| r.tr > TR_SPLIT)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub panel: String,
    pub model: String,
    pub profile: String,
    pub f_score: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Published comparison figures (C4.5, LibSVM and the semantic rules) for
/// juxtaposition in reports.
pub fn reference_table() -> Vec<ReferenceRow> {
    csv::Reader::from_reader(REFERENCE_TABLE.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("bundled reference table parses")
}

/// Concatenates the `<title>`, `<desc>` and `<narr>` sections of a TREC-style
/// topic statement, dropping `Description:`/`Narrative:` labels. Text without
/// any of those tags is returned as is.
pub fn parse_topic_statement(raw: &str) -> String {
    const TAGS: [&str; 3] = ["<title>", "<desc>", "<narr>"];
    if !TAGS.iter().any(|t| raw.contains(t)) {
        return raw.trim().to_string();
    }
    let mut sections = Vec::new();
    for tag in TAGS {
        let Some(start) = raw.find(tag) else { continue };
        let body = &raw[start + tag.len()..];
        let end = body.find('<').unwrap_or(body.len());
        let mut body = body[..end].trim();
        for label in ["Description:", "Narrative:", "Title:"] {
            if let Some(rest) = body.strip_prefix(label) {
                body = rest.trim_start();
            }
        }
        if !body.is_empty() {
            sections.push(body.split_whitespace().collect::<Vec<_>>().join(" "));
        }
    }
    sections.join("\n")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
}

/// Reads `corpus.jsonl`; document ids must be unique.
pub fn load_corpus(path: &Path) -> Result<BTreeMap<String, String>, HarnessError> {
    let file = path.display().to_string();
    let mut out = BTreeMap::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::Malformed {
                file: file.clone(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if out.insert(rec.id.clone(), rec.text).is_some() {
            return Err(HarnessError::Malformed {
                file: file.clone(),
                line: i + 1,
                reason: format!("duplicate document id {:?}", rec.id),
            });
        }
    }
    Ok(out)
}

/// topic id -> (doc id -> relevant).
pub type Judgments = BTreeMap<String, BTreeMap<String, bool>>;

/// Reads `topic_id<TAB>doc_id<TAB>{0|1}` lines.
pub fn load_judgments(path: &Path) -> Result<Judgments, HarnessError> {
    let file = path.display().to_string();
    let mut out: Judgments = BTreeMap::new();
    for (i, line) in read(path)?.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| HarnessError::Malformed {
            file: file.clone(),
            line: i + 1,
            reason,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let relevant = match f[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("judgment must be 0 or 1, got {other:?}"))),
        };
        let topic = out.entry(f[0].to_string()).or_default();
        if topic.insert(f[1].to_string(), relevant).is_some() {
            return Err(bad(format!("duplicate judgment for document {:?}", f[1])));
        }
    }
    Ok(out)
}

/// A directory of topics with a shared corpus:
/// `topics/<id>.txt`, `corpus.jsonl`, `train.tsv`, `test.tsv`.
#[derive(Debug, Clone)]
pub struct Suite {
    pub topics: BTreeMap<String, String>,
    pub corpus: BTreeMap<String, String>,
    pub train: Judgments,
    pub test: Judgments,
}

impl Suite {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let topics_dir = dir.join("topics");
        let entries = fs::read_dir(&topics_dir).map_err(|source| HarnessError::Io {
            path: topics_dir.clone(),
            source,
        })?;
        let mut topics = BTreeMap::new();
        for entry in entries {
            let path = entry
                .map_err(|source| HarnessError::Io {
                    path: topics_dir.clone(),
                    source,
                })?
                .path();
            if path.extension().is_some_and(|e| e == "txt") {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                topics.insert(id, read(&path)?);
            }
        }
        Ok(Self {
            topics,
            corpus: load_corpus(&dir.join("corpus.jsonl"))?,
            train: load_judgments(&dir.join("train.tsv"))?,
            test: load_judgments(&dir.join("test.tsv"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTopic {
    pub topic_id: String,
    pub error: String,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub panels: Panels,
    pub topics: Vec<TopicRun>,
    pub failed: Vec<FailedTopic>,
    pub reference: Vec<ReferenceRow>,
}

fn examples(
    judged: Option<&BTreeMap<String, bool>>,
    models: &BTreeMap<String, DocumentModel>,
) -> Result<Vec<Example>, HarnessError> {
    judged
        .into_iter()
        .flatten()
        .map(|(id, &relevant)| {
            let model = models
                .get(id)
                .ok_or_else(|| HarnessError::MissingDocument(id.clone()))?;
            Ok(Example {
                doc_id: id.clone(),
                model: model.clone(),
                relevant,
            })
        })
        .collect()
}

/// Runs every topic of `suite` on a pool of `jobs` threads. Topic results
/// are collected in topic-id order, so the report is identical for any
/// thread count.
pub fn run_suite(
    res: &Resources,
    suite: &Suite,
    gp: &GpConfig,
    grid_step: f64,
    jobs: usize,
) -> Result<SuiteReport, HarnessError> {
    grid_points(grid_step)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");

    let models: BTreeMap<String, DocumentModel> = pool.install(|| {
        suite
            .corpus
            .par_iter()
            .map(|(id, text)| {
                let cache = RelCache::new(&res.graph);
                (id.clone(), build_model(res, &cache, text))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    });

    let mut inputs = Vec::new();
    for (id, raw) in &suite.topics {
        let train = examples(suite.train.get(id), &models)?;
        let test = examples(suite.test.get(id), &models)?;
        inputs.push((id, parse_topic_statement(raw), train, test));
    }

    let outcomes: Vec<(String, Result<TopicRun, TopicError>)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|(id, statement, train, test)| {
                let out = run_topic(res, id, statement, train, test, gp, grid_step);
                ((*id).clone(), out)
            })
            .collect()
    });

    let mut topics = Vec::new();
    let mut failed = Vec::new();
    for (topic_id, outcome) in outcomes {
        match outcome {
            Ok(run) => topics.push(run),
            Err(e) => {
                warn!("topic {topic_id} failed and is excluded from the panels: {e}");
                failed.push(FailedTopic {
                    topic_id,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(SuiteReport {
        panels: aggregate(&topics)?,
        topics,
        failed,
        reference: reference_table(),
    })
}
