//! Wikification: detect which Wikipedia concepts a text links to.
//!
//! A deterministic commonness + context heuristic: candidate surfaces come
//! from the anchor dictionary, rare-link surfaces are dropped by link
//! probability, and ambiguous surfaces are resolved against the senses of the
//! document's unambiguous surfaces.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::linkgraph::{ConceptId, LinkGraph, DEFAULT_MAX_NGRAM};
use crate::relatedness::Relate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WikifyConfig {
    pub max_ngram: usize,
    pub link_probability_min: f64,
    /// Weight of commonness against context relatedness when disambiguating.
    pub commonness_weight: f64,
}

impl Default for WikifyConfig {
    fn default() -> Self {
        Self {
            max_ngram: DEFAULT_MAX_NGRAM,
            link_probability_min: 0.05,
            commonness_weight: 0.5,
        }
    }
}

impl WikifyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_ngram == 0 {
            return Err("max_ngram must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.link_probability_min) {
            return Err("link_probability_min must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.commonness_weight) {
            return Err("commonness_weight must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// anchor count / (anchor count + plain-text occurrences); 1 when the
/// surface has no occurrence data, 0 when it is never an anchor.
pub fn link_probability(g: &LinkGraph, surface: &str) -> f64 {
    let anchored = g.anchor_count(surface);
    if anchored == 0 {
        return 0.0;
    }
    match g.plain_occurrences(surface) {
        Some(plain) => anchored as f64 / (anchored + plain) as f64,
        None => 1.0,
    }
}

/// A span of the input linked to a concept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedSpan {
    pub span: Range<usize>,
    pub surface: String,
    pub concept: ConceptId,
}

/// Wikification with the supporting spans of every chosen concept.
pub fn wikify_spans(rel: &impl Relate, cfg: &WikifyConfig, text: &str) -> Vec<LinkedSpan> {
    let g = rel.graph();
    let candidates: Vec<_> = g
        .anchor_candidates(text, cfg.max_ngram)
        .into_iter()
        .filter(|(_, surface)| link_probability(g, surface) >= cfg.link_probability_min)
        .map(|(span, surface)| {
            let senses = g.senses(&surface);
            (span, surface, senses)
        })
        .filter(|(_, _, senses)| !senses.is_empty())
        .collect();

    let context: BTreeSet<ConceptId> = candidates
        .iter()
        .filter(|(_, _, senses)| senses.len() == 1)
        .map(|(_, _, senses)| senses[0].concept)
        .collect();
    let alpha = if context.is_empty() {
        1.0
    } else {
        cfg.commonness_weight
    };

    candidates
        .into_iter()
        .map(|(span, surface, senses)| {
            let concept = if senses.len() == 1 {
                senses[0].concept
            } else {
                let mut best: Option<(f64, ConceptId)> = None;
                for s in &senses {
                    let ctx = if context.is_empty() {
                        0.0
                    } else {
                        context
                            .iter()
                            .map(|&c| rel.relate(s.concept, c))
                            .sum::<f64>()
                            / context.len() as f64
                    };
                    let score = alpha * s.commonness + (1.0 - alpha) * ctx;
                    // senses arrive ordered by id, so strict > keeps the lowest id on ties
                    if best.is_none_or(|(b, _)| score > b) {
                        best = Some((score, s.concept));
                    }
                }
                best.map(|(_, c)| c).expect("senses is non-empty")
            };
            LinkedSpan {
                span,
                surface,
                concept,
            }
        })
        .collect()
}

/// The set of concepts `text` links to.
pub fn wikify(rel: &impl Relate, cfg: &WikifyConfig, text: &str) -> BTreeSet<ConceptId> {
    wikify_spans(rel, cfg, text)
        .into_iter()
        .map(|l| l.concept)
        .collect()
}
