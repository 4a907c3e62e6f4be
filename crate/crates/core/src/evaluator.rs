//! Rule evaluation: per-leaf concept decisions followed by the boolean
//! expression over those decisions.
//!
//! A leaf is present in a document when it is directly in the document's
//! Wikipedia or ontology model, or when its document relatedness strictly
//! exceeds the leaf's threshold (`c1` for named entities, `c2` otherwise).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::docmodel::{DocumentModel, Resources};
use crate::linkgraph::{ConceptId, LinkGraph};
use crate::ontology::Ontology;
use crate::query::{ConceptRef, Leaf, Query};
use crate::relatedness::{self, DocRel, Relate, SensedMember};

pub const DEFAULT_C1: f64 = 0.90;
pub const DEFAULT_C2: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("thresholds must satisfy 0 <= c2 <= c1 <= 1 (got c1 = {c1}, c2 = {c2})")]
pub struct ThresholdError {
    pub c1: f64,
    pub c2: f64,
}

/// A query with its relatedness thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticRule {
    pub query: Query,
    c1: f64,
    c2: f64,
}

impl SemanticRule {
    pub fn new(query: Query, c1: f64, c2: f64) -> Result<Self, ThresholdError> {
        if !(0.0 <= c2 && c2 <= c1 && c1 <= 1.0) {
            return Err(ThresholdError { c1, c2 });
        }
        Ok(Self { query, c1, c2 })
    }

    pub fn with_default_thresholds(query: Query) -> Self {
        Self {
            query,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
        }
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// c_rel(v).
    pub fn threshold(&self, leaf: &Leaf) -> f64 {
        if leaf.named_entity {
            self.c1
        } else {
            self.c2
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reason {
    Direct,
    Related { score: f64, witness: String },
    Absent { score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVerdict {
    pub concept: Leaf,
    pub value: bool,
    pub reason: Reason,
}

/// Threshold-independent facts about one leaf in one document.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafScore {
    pub direct: bool,
    /// Best document relatedness; not computed for direct hits.
    pub rel: Option<DocRel>,
}

impl LeafScore {
    pub fn accepts(&self, threshold: f64) -> bool {
        self.direct || self.rel.as_ref().is_some_and(|r| r.score > threshold)
    }
}

/// Senses standing for a query leaf.
pub fn leaf_senses(g: &LinkGraph, o: &Ontology, leaf: &Leaf) -> Vec<ConceptId> {
    match &leaf.concept {
        ConceptRef::Wiki(id) => vec![*id],
        ConceptRef::Onto(c) => relatedness::ontology_senses(g, o, c),
    }
}

/// v ∈ Λ_W(d) ∪ Λ_O(d), with optional ontology subsumption.
pub fn directly_present(o: &Ontology, subsumption: bool, leaf: &Leaf, m: &DocumentModel) -> bool {
    match &leaf.concept {
        ConceptRef::Wiki(id) => m.has_wiki(*id),
        ConceptRef::Onto(c) if subsumption => o.subsumed_in(c, &m.onto),
        ConceptRef::Onto(c) => m.onto.contains(c),
    }
}

pub fn score_leaf(
    res: &Resources,
    rel: &impl Relate,
    leaf: &Leaf,
    m: &DocumentModel,
    members: &[SensedMember],
) -> LeafScore {
    if directly_present(&res.ontology, res.subsumption, leaf, m) {
        return LeafScore {
            direct: true,
            rel: None,
        };
    }
    let senses = leaf_senses(rel.graph(), &res.ontology, leaf);
    LeafScore {
        direct: false,
        rel: Some(relatedness::doc_rel_members(rel, &senses, members)),
    }
}

/// Scores for every distinct leaf of `q`.
pub fn score_query(
    res: &Resources,
    rel: &impl Relate,
    q: &Query,
    m: &DocumentModel,
) -> HashMap<ConceptRef, LeafScore> {
    let members = relatedness::sensed_members(rel.graph(), &res.ontology, m);
    let mut out = HashMap::new();
    for leaf in q.leaves() {
        if !out.contains_key(&leaf.concept) {
            out.insert(
                leaf.concept.clone(),
                score_leaf(res, rel, leaf, m, &members),
            );
        }
    }
    out
}

pub fn verdict(rule: &SemanticRule, leaf: &Leaf, score: &LeafScore) -> ConceptVerdict {
    let reason = match (&score.rel, score.direct) {
        (_, true) => Reason::Direct,
        (Some(r), false) if r.score > rule.threshold(leaf) => Reason::Related {
            score: r.score,
            witness: r.witness.clone().unwrap_or_default(),
        },
        (r, false) => Reason::Absent {
            score: r.as_ref().map_or(0.0, |r| r.score),
        },
    };
    ConceptVerdict {
        concept: leaf.clone(),
        value: !matches!(reason, Reason::Absent { .. }),
        reason,
    }
}

/// δ(v, d).
pub fn concept_eval(
    res: &Resources,
    rule: &SemanticRule,
    leaf: &Leaf,
    m: &DocumentModel,
) -> ConceptVerdict {
    let members = relatedness::sensed_members(&res.graph, &res.ontology, m);
    verdict(rule, leaf, &score_leaf(res, &res.graph, leaf, m, &members))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matched: bool,
    /// One verdict per distinct leaf, in first-appearance order.
    pub verdicts: Vec<ConceptVerdict>,
}

/// E(q, d) with verdicts, using `rel` for concept relatedness.
pub fn evaluate_with(
    res: &Resources,
    rel: &impl Relate,
    rule: &SemanticRule,
    m: &DocumentModel,
) -> Evaluation {
    let scores = score_query(res, rel, &rule.query, m);
    let mut verdicts: Vec<ConceptVerdict> = Vec::new();
    for leaf in rule.query.leaves() {
        if verdicts.iter().all(|v| v.concept.concept != leaf.concept) {
            verdicts.push(verdict(rule, leaf, &scores[&leaf.concept]));
        }
    }
    let matched = rule.query.eval_with(&mut |leaf| {
        verdicts
            .iter()
            .find(|v| v.concept.concept == leaf.concept)
            .is_some_and(|v| v.value)
    });
    Evaluation { matched, verdicts }
}

pub fn evaluate(res: &Resources, rule: &SemanticRule, m: &DocumentModel) -> Evaluation {
    evaluate_with(res, &res.graph, rule, m)
}

/// Evaluation from precomputed scores; thresholds applied per leaf.
pub fn matches_scores(
    rule_query: &Query,
    c1: f64,
    c2: f64,
    scores: &HashMap<ConceptRef, LeafScore>,
) -> bool {
    rule_query.eval_with(&mut |leaf| {
        let t = if leaf.named_entity { c1 } else { c2 };
        scores.get(&leaf.concept).is_some_and(|s| s.accepts(t))
    })
}

/// Exact-match evaluation: relatedness expansion disabled.
pub fn exact_match(o: &Ontology, subsumption: bool, q: &Query, m: &DocumentModel) -> bool {
    q.eval_with(&mut |leaf| directly_present(o, subsumption, leaf, m))
}

/// JSONL verdict report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub doc_id: String,
    #[serde(rename = "match")]
    pub matched: u8,
    pub leaves: Vec<LeafRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRecord {
    pub concept: String,
    pub value: u8,
    pub reason: String,
    pub score: Option<f64>,
    pub witness: Option<String>,
}

impl From<&ConceptVerdict> for LeafRecord {
    fn from(v: &ConceptVerdict) -> Self {
        let (reason, score, witness) = match &v.reason {
            Reason::Direct => ("direct", None, None),
            Reason::Related { score, witness } => ("related", Some(*score), Some(witness.clone())),
            Reason::Absent { score } => ("absent", Some(*score), None),
        };
        LeafRecord {
            concept: v.concept.surface.clone(),
            value: u8::from(v.value),
            reason: reason.to_string(),
            score,
            witness,
        }
    }
}

impl VerdictRecord {
    pub fn new(doc_id: impl Into<String>, e: &Evaluation) -> Self {
        Self {
            doc_id: doc_id.into(),
            matched: u8::from(e.matched),
            leaves: e.verdicts.iter().map(LeafRecord::from).collect(),
        }
    }
}
