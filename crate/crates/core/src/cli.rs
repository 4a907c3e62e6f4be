//! Command-line surface. `dispatch` never panics on bad input: usage errors
//! exit 1, data errors exit 2, and either prints one JSON error line on
//! stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::builder::{self, ExactMatch, GpConfig, TrainingSet};
use crate::docmodel::{build_model, ModelRecord, Resources, Stopwords};
use crate::evaluator::{self, SemanticRule, VerdictRecord, DEFAULT_C1, DEFAULT_C2};
use crate::harness::{self, Suite, DEFAULT_GRID_STEP};
use crate::linkgraph::load_graph_dir;
use crate::ner::load_gazetteer;
use crate::ontology::load_ontology;
use crate::query::{self, Vocabulary};
use crate::relatedness::{term_rel, RelCache};
use crate::wikifier::{self, WikifyConfig};

#[derive(Debug, Parser)]
#[command(
    name = "wikisr",
    version,
    about = "Semantic document filtering with concept rules"
)]
struct Cli {
    /// Directory holding pages.tsv, redirects.tsv, anchors.tsv, links.tsv
    #[arg(long, global = true)]
    graph_dir: Option<PathBuf>,
    /// Ontology fact file (id, subject, relation, object)
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    /// Gazetteer (surface, class)
    #[arg(long, global = true)]
    gazetteer: Option<PathBuf>,
    /// Stopword list, one per line
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the rule search
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Topic-level parallelism for `evaluate`
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and index the resources
    Ingest,
    /// Print the Wikipedia concepts linked in a document
    Wikify { doc: PathBuf },
    /// Print the relatedness of two terms
    Relatedness { a: String, b: String },
    /// Print document models as JSONL (a .jsonl input is read as a corpus)
    Profile { doc: PathBuf },
    /// Learn a rule for a topic from labelled training documents
    BuildRule { topic: PathBuf, train: PathBuf },
    /// Apply a rule to a corpus
    Filter {
        rule: PathBuf,
        corpus: PathBuf,
        /// Emit per-leaf verdicts as JSONL
        #[arg(long)]
        explain: bool,
    },
    /// Run the full pipeline over a suite directory and write report.json
    Evaluate { topics_dir: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl ToString) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: &'a str,
}

/// Thresholds and entity flags stored next to a learned rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSidecar {
    pub c1: f64,
    pub c2: f64,
    #[serde(default)]
    pub named_entities: Vec<String>,
}

/// Sidecar path for a rule file: same stem, `.json` extension.
pub fn sidecar_path(rule: &Path) -> PathBuf {
    rule.with_extension("json")
}

/// Settings read from `--config`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub wikify: WikifyConfig,
    pub subsumption: bool,
    pub grid_step: f64,
    pub gp: GpConfig,
    /// Seed from the file; `--seed` takes precedence.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            wikify: WikifyConfig::default(),
            subsumption: true,
            grid_step: DEFAULT_GRID_STEP,
            gp: GpConfig::with_seed(0),
            seed: None,
        }
    }
}

impl RunConfig {
    /// `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(content: &str) -> Result<Self, String> {
        let mut c = Self::default();
        for (i, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| format!("line {}: {key}: {e}", i + 1);
            macro_rules! set {
                ($field:expr) => {
                    $field = parse_value(value).map_err(bad)?
                };
            }
            match key {
                "population_size" => set!(c.gp.population_size),
                "generations" => set!(c.gp.generations),
                "tournament_size" => set!(c.gp.tournament_size),
                "crossover_rate" => set!(c.gp.crossover_rate),
                "mutation_rate" => set!(c.gp.mutation_rate),
                "max_depth" => set!(c.gp.max_depth),
                "elitism" => set!(c.gp.elitism),
                "rng_seed" | "seed" => c.seed = Some(parse_value(value).map_err(bad)?),
                "grid_step" => set!(c.grid_step),
                "max_ngram" => set!(c.wikify.max_ngram),
                "link_probability_min" => set!(c.wikify.link_probability_min),
                "commonness_weight" => set!(c.wikify.commonness_weight),
                "subsumption" => set!(c.subsumption),
                _ => return Err(format!("line {}: unknown key {key:?}", i + 1)),
            }
        }
        c.wikify.validate()?;
        Ok(c)
    }
}

fn parse_value<T>(value: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| e.to_string())
}

/// Runs the command line `argv` (program name first) and returns the exit
/// status. Regular output goes to `out`, error lines to `err`.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            emit_error(err, "usage", &e.kind().to_string());
            return 1;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            emit_error(err, "usage", &m);
            1
        }
        Err(CliError::Data(m)) => {
            emit_error(err, "data", &m);
            2
        }
    }
}

fn emit_error(err: &mut dyn Write, kind: &str, message: &str) {
    let line = serde_json::to_string(&ErrorLine {
        error: kind,
        message,
    })
    .expect("serializable");
    let _ = writeln!(err, "{line}");
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "no such file or directory: {}",
            path.display()
        )))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn check_paths(cli: &Cli) -> Result<(), CliError> {
    let optional = [
        &cli.graph_dir,
        &cli.ontology,
        &cli.gazetteer,
        &cli.stopwords,
        &cli.config,
    ];
    for p in optional.into_iter().flatten() {
        require_exists(p)?;
    }
    let positional: Vec<&Path> = match &cli.command {
        Command::Ingest | Command::Relatedness { .. } => vec![],
        Command::Wikify { doc } | Command::Profile { doc } => vec![doc],
        Command::BuildRule { topic, train } => vec![topic, train],
        Command::Filter { rule, corpus, .. } => vec![rule, corpus],
        Command::Evaluate { topics_dir } => vec![topics_dir],
    };
    for p in positional {
        require_exists(p)?;
    }
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => RunConfig::parse(&read_text(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => Ok(RunConfig::default()),
    }
}

fn load_resources(cli: &Cli, cfg: &RunConfig) -> Result<Resources, CliError> {
    let dir = cli
        .graph_dir
        .as_ref()
        .ok_or_else(|| CliError::Usage("--graph-dir is required".into()))?;
    let mut res = Resources::new(load_graph_dir(dir).map_err(CliError::data)?);
    if let Some(p) = &cli.ontology {
        res.ontology = load_ontology(p).map_err(CliError::data)?;
    }
    if let Some(p) = &cli.gazetteer {
        res.gazetteer = load_gazetteer(p).map_err(CliError::data)?;
    }
    if let Some(p) = &cli.stopwords {
        res.stopwords =
            Stopwords::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    res.wikify = cfg.wikify;
    res.subsumption = cfg.subsumption;
    log::info!(
        "loaded {} articles, {} ontology concepts, {} gazetteer entries",
        res.graph.total_articles(),
        res.ontology.concepts().len(),
        res.gazetteer.len()
    );
    Ok(res)
}

fn gp_config(cli: &Cli, cfg: &RunConfig) -> Result<GpConfig, CliError> {
    let seed = cli
        .seed
        .or(cfg.seed)
        .ok_or_else(|| CliError::Usage("a seed is required (--seed or rng_seed=)".into()))?;
    let gp = GpConfig {
        rng_seed: seed,
        ..cfg.gp.clone()
    };
    gp.validate().map_err(CliError::data)?;
    Ok(gp)
}

/// Reads a plain-text document (id = file stem) or a JSONL corpus.
fn read_documents(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return harness::load_corpus(path).map_err(CliError::data);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(BTreeMap::from([(id, read_text(path)?)]))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    check_paths(cli)?;
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Ingest => {
            let res = load_resources(cli, &cfg)?;
            writeln!(out, "articles\t{}", res.graph.total_articles()).map_err(io)?;
            writeln!(out, "surfaces\t{}", res.graph.surfaces().len()).map_err(io)?;
            writeln!(out, "ontology_concepts\t{}", res.ontology.concepts().len()).map_err(io)?;
            writeln!(out, "gazetteer_entries\t{}", res.gazetteer.len()).map_err(io)?;
        }
        Command::Wikify { doc } => {
            let res = load_resources(cli, &cfg)?;
            let text = read_text(doc)?;
            let cache = RelCache::new(&res.graph);
            for id in wikifier::wikify(&cache, &res.wikify, &text) {
                let title = res.graph.title(id).unwrap_or_default();
                writeln!(out, "{id}\t{title}").map_err(io)?;
            }
        }
        Command::Relatedness { a, b } => {
            let res = load_resources(cli, &cfg)?;
            writeln!(out, "{:.4}", term_rel(&res.graph, a, b)).map_err(io)?;
        }
        Command::Profile { doc } => {
            let res = load_resources(cli, &cfg)?;
            let cache = RelCache::new(&res.graph);
            for (doc_id, text) in read_documents(doc)? {
                let rec = ModelRecord {
                    doc_id,
                    model: build_model(&res, &cache, &text),
                };
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&rec).map_err(CliError::data)?
                )
                .map_err(io)?;
            }
        }
        Command::BuildRule { topic, train } => build_rule(cli, &cfg, topic, train, out)?,
        Command::Filter {
            rule,
            corpus,
            explain,
        } => filter(cli, &cfg, rule, corpus, *explain, out)?,
        Command::Evaluate { topics_dir } => {
            let gp = gp_config(cli, &cfg)?;
            let res = load_resources(cli, &cfg)?;
            let suite = Suite::load(topics_dir).map_err(CliError::data)?;
            let report = harness::run_suite(&res, &suite, &gp, cfg.grid_step, cli.jobs)
                .map_err(CliError::data)?;
            let path = cli
                .out
                .clone()
                .unwrap_or_else(|| topics_dir.join("report.json"));
            let mut json = serde_json::to_string_pretty(&report).map_err(CliError::data)?;
            json.push('\n');
            write_file(&path, &json)?;
            for failed in &report.failed {
                log::warn!("topic {} failed: {}", failed.topic_id, failed.error);
            }
            let a = &report.panels.all;
            writeln!(
                out,
                "topics\t{}\tf_score\t{:.4}\taccuracy\t{:.4}\tprecision\t{:.4}\trecall\t{:.4}",
                a.topics, a.f_score, a.accuracy, a.precision, a.recall
            )
            .map_err(io)?;
            writeln!(out, "report\t{}", path.display()).map_err(io)?;
        }
    }
    Ok(())
}

/// `<train>` holds `corpus.jsonl` and `judgments.tsv`. Judgments are read
/// for the topic named by the topic file's stem, or for the only topic
/// present.
fn build_rule(
    cli: &Cli,
    cfg: &RunConfig,
    topic: &Path,
    train: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let gp = gp_config(cli, cfg)?;
    let res = load_resources(cli, cfg)?;
    let statement = harness::parse_topic_statement(&read_text(topic)?);
    let corpus = harness::load_corpus(&train.join("corpus.jsonl")).map_err(CliError::data)?;
    let judgments =
        harness::load_judgments(&train.join("judgments.tsv")).map_err(CliError::data)?;
    let topic_id = topic
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let judged = match judgments.get(&topic_id) {
        Some(j) => j,
        None if judgments.len() == 1 => judgments.values().next().expect("one topic"),
        None => {
            return Err(CliError::Data(format!(
                "no judgments for topic {topic_id:?}"
            )))
        }
    };

    let cache = RelCache::new(&res.graph);
    let (mut positives, mut negatives) = (Vec::new(), Vec::new());
    for (doc_id, &relevant) in judged {
        let text = corpus.get(doc_id).ok_or_else(|| {
            CliError::data(harness::HarnessError::MissingDocument(doc_id.clone()))
        })?;
        let m = build_model(&res, &cache, text);
        if relevant {
            positives.push(m);
        } else {
            negatives.push(m);
        }
    }
    let training = TrainingSet::new(positives, negatives).map_err(CliError::data)?;
    let terminals = builder::terminal_set(&res, &statement).map_err(CliError::data)?;
    let learned = builder::build_rule(
        &terminals,
        &training,
        &gp,
        &ExactMatch::from_resources(&res),
    )
    .map_err(CliError::data)?;
    let tuning = harness::tune_thresholds(&res, &learned.query, &training, cfg.grid_step)
        .map_err(CliError::data)?;

    let mut named_entities: Vec<String> = learned
        .query
        .leaves()
        .into_iter()
        .filter(|l| l.named_entity)
        .map(|l| l.surface.clone())
        .collect();
    named_entities.sort();
    named_entities.dedup();
    let sidecar = RuleSidecar {
        c1: tuning.c1,
        c2: tuning.c2,
        named_entities,
    };
    let rule = learned.query.serialize();
    let sidecar_json = serde_json::to_string(&sidecar).map_err(CliError::data)?;
    if let Some(path) = &cli.out {
        write_file(path, &format!("{rule}\n"))?;
        write_file(&sidecar_path(path), &format!("{sidecar_json}\n"))?;
    }
    writeln!(out, "{rule}").map_err(io)?;
    writeln!(out, "{sidecar_json}").map_err(io)?;
    Ok(())
}

fn filter(
    cli: &Cli,
    cfg: &RunConfig,
    rule_path: &Path,
    corpus: &Path,
    explain: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let res = load_resources(cli, cfg)?;
    let text = read_text(rule_path)?;
    let rule_text = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| CliError::Data(format!("{}: empty rule", rule_path.display())))?;

    let mut vocab = Vocabulary::from_resources(&res.graph, &res.ontology, &res.gazetteer);
    let side = sidecar_path(rule_path);
    let sidecar = if side.exists() {
        let s: RuleSidecar = serde_json::from_str(&read_text(&side)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", side.display())))?;
        Some(s)
    } else {
        None
    };
    if let Some(s) = &sidecar {
        let flagged: Vec<_> = vocab
            .leaves()
            .map(|l| {
                let mut l = l.clone();
                l.named_entity = s.named_entities.contains(&l.surface);
                l
            })
            .collect();
        vocab = Vocabulary::from_leaves(flagged);
    }
    let query = query::parse_query(rule_text, &vocab).map_err(CliError::data)?;
    let (c1, c2) = sidecar
        .as_ref()
        .map_or((DEFAULT_C1, DEFAULT_C2), |s| (s.c1, s.c2));
    let rule = SemanticRule::new(query, c1, c2).map_err(CliError::data)?;

    let cache = RelCache::new(&res.graph);
    for (doc_id, text) in read_documents(corpus)? {
        let m = build_model(&res, &cache, &text);
        let e = evaluator::evaluate_with(&res, &cache, &rule, &m);
        if explain {
            let rec = VerdictRecord::new(doc_id, &e);
            writeln!(
                out,
                "{}",
                serde_json::to_string(&rec).map_err(CliError::data)?
            )
            .map_err(io)?;
        } else {
            writeln!(out, "{doc_id}\t{}", u8::from(e.matched)).map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys() {
        let c = RunConfig::parse(
            "# run\npopulation_size = 20\nrng_seed=7\ngrid_step=0.1\nsubsumption=false\nmax_ngram=3\n",
        )
        .unwrap();
        assert_eq!(c.gp.population_size, 20);
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.grid_step, 0.1);
        assert!(!c.subsumption);
        assert_eq!(c.wikify.max_ngram, 3);
    }

    #[test]
    fn config_errors() {
        assert!(RunConfig::parse("colour=blue").is_err());
        assert!(RunConfig::parse("generations").is_err());
        assert!(RunConfig::parse("generations=many").is_err());
        assert!(RunConfig::parse("commonness_weight=2").is_err());
    }

    #[test]
    fn unknown_subcommand() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = dispatch(["wikisr", "frobnicate"], &mut out, &mut err);
        assert_eq!(code, 1);
        let err = String::from_utf8(err).unwrap();
        assert!(err.contains("Usage"));
        assert!(err
            .lines()
            .last()
            .unwrap()
            .starts_with(r#"{"error":"usage""#));
    }

    #[test]
    fn missing_graph_dir() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(
            dispatch(["wikisr", "relatedness", "a", "b"], &mut out, &mut err),
            1
        );
    }

    #[test]
    fn help_is_success() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(dispatch(["wikisr", "--help"], &mut out, &mut err), 0);
        assert!(err.is_empty());
    }
}
