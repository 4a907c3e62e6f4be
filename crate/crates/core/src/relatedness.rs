//! Link-structure relatedness between concepts, terms, and documents.
//!
//! Concept relatedness follows the normalized-distance form over inlink sets:
//!
//! ```text
//! ngd(a, b) = (ln max(|A|,|B|) - ln |A∩B|) / (ln |W| - ln min(|A|,|B|))
//! link_rel(a, b) = clamp(1 - ngd(a, b), 0, 1)
//! ```
//!
//! where `A`, `B` are the inlink sets and `|W|` the number of articles.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::docmodel::DocumentModel;
use crate::linkgraph::{ConceptId, GraphError, LinkGraph};
use crate::ontology::Ontology;

/// |A ∩ B| for two ascending, deduplicated slices.
pub fn intersection_size(a: &[ConceptId], b: &[ConceptId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Relatedness from set cardinalities. `identical` says whether the two sets
/// are equal; it only matters when `min(|A|,|B|) = |W|`.
pub fn relatedness_from_counts(
    size_a: usize,
    size_b: usize,
    common: usize,
    total: usize,
    identical: bool,
) -> f64 {
    if size_a == 0 || size_b == 0 || common == 0 {
        return 0.0;
    }
    let (lo, hi) = if size_a < size_b {
        (size_a, size_b)
    } else {
        (size_b, size_a)
    };
    if lo >= total {
        return if identical { 1.0 } else { 0.0 };
    }
    let ngd = ((hi as f64).ln() - (common as f64).ln()) / ((total as f64).ln() - (lo as f64).ln());
    (1.0 - ngd).clamp(0.0, 1.0)
}

/// Concept–concept relatedness.
pub fn link_rel(g: &LinkGraph, a: ConceptId, b: ConceptId) -> Result<f64, GraphError> {
    let ia = g.inlinks(a)?;
    let ib = g.inlinks(b)?;
    let common = intersection_size(ia, ib);
    let identical = common == ia.len() && common == ib.len();
    Ok(relatedness_from_counts(
        ia.len(),
        ib.len(),
        common,
        g.total_articles(),
        identical,
    ))
}

/// Source of concept relatedness values; lets callers put a cache in front of
/// the graph.
pub trait Relate {
    fn graph(&self) -> &LinkGraph;

    /// Relatedness of two concepts; unknown concepts relate at 0.
    fn relate(&self, a: ConceptId, b: ConceptId) -> f64;
}

impl Relate for LinkGraph {
    fn graph(&self) -> &LinkGraph {
        self
    }

    fn relate(&self, a: ConceptId, b: ConceptId) -> f64 {
        link_rel(self, a, b).unwrap_or(0.0)
    }
}

/// Memoizing front for [`link_rel`]. Not `Sync`: each evaluation thread
/// owns its own cache.
pub struct RelCache<'g> {
    graph: &'g LinkGraph,
    memo: RefCell<HashMap<(ConceptId, ConceptId), f64>>,
}

impl<'g> RelCache<'g> {
    pub fn new(graph: &'g LinkGraph) -> Self {
        Self {
            graph,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.memo.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Relate for RelCache<'_> {
    fn graph(&self) -> &LinkGraph {
        self.graph
    }

    fn relate(&self, a: ConceptId, b: ConceptId) -> f64 {
        let key = if a <= b { (a, b) } else { (b, a) };
        if let Some(&v) = self.memo.borrow().get(&key) {
            return v;
        }
        let v = self.graph.relate(a, b);
        self.memo.borrow_mut().insert(key, v);
        v
    }
}

/// Maximum relatedness over all sense pairs; 0 when either side is empty.
pub fn max_pair_rel(rel: &impl Relate, left: &[ConceptId], right: &[ConceptId]) -> f64 {
    let mut best = 0.0f64;
    for &a in left {
        for &b in right {
            best = best.max(rel.relate(a, b));
        }
    }
    best
}

/// Term–term relatedness: max link relatedness over the senses of both terms.
pub fn term_rel(g: &LinkGraph, s1: &str, s2: &str) -> f64 {
    max_pair_rel(g, &g.sense_ids(s1), &g.sense_ids(s2))
}

/// Senses standing for an ontology concept: its attached Wikipedia page when
/// one exists (the article itself if the title is exact), otherwise the
/// senses of its labels.
pub fn ontology_senses(g: &LinkGraph, o: &Ontology, concept: &str) -> Vec<ConceptId> {
    if let Ok(Some(page)) = o.wiki_page_of(concept) {
        return match g.article(page) {
            Some(id) => vec![id],
            None => g.sense_ids(page),
        };
    }
    let mut out: Vec<ConceptId> = o.labels(concept).flat_map(|l| g.sense_ids(l)).collect();
    if out.is_empty() {
        out = g.sense_ids(concept);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// A document member together with the senses it stands for.
#[derive(Debug, Clone)]
pub struct SensedMember {
    pub label: String,
    pub senses: Vec<ConceptId>,
}

/// Resolves every member of Λ(d) to its senses, in model order: Wikipedia
/// concepts, ontology concepts, then BOW words. Members without senses are
/// dropped since they relate to everything at 0.
pub fn sensed_members(g: &LinkGraph, o: &Ontology, m: &DocumentModel) -> Vec<SensedMember> {
    let mut out = Vec::new();
    for &w in m.wiki_ne.iter().chain(&m.wiki_general) {
        out.push(SensedMember {
            label: g.title(w).unwrap_or_default().to_string(),
            senses: vec![w],
        });
    }
    for c in &m.onto {
        out.push(SensedMember {
            label: c.clone(),
            senses: ontology_senses(g, o, c),
        });
    }
    for word in &m.bow {
        out.push(SensedMember {
            label: word.clone(),
            senses: g.sense_ids(word),
        });
    }
    out.retain(|m| !m.senses.is_empty());
    out
}

/// Document–term relatedness with the member that attained it.
#[derive(Debug, Clone, PartialEq)]
pub struct DocRel {
    pub score: f64,
    pub witness: Option<String>,
}

/// Max over pre-resolved members; the first member reaching the maximum is
/// the witness.
pub fn doc_rel_members(
    rel: &impl Relate,
    senses: &[ConceptId],
    members: &[SensedMember],
) -> DocRel {
    let mut best = DocRel {
        score: 0.0,
        witness: None,
    };
    for m in members {
        let s = max_pair_rel(rel, senses, &m.senses);
        if s > best.score {
            best = DocRel {
                score: s,
                witness: Some(m.label.clone()),
            };
        }
    }
    best
}

/// d-rel(s, d): max of term relatedness between `s` and any member of Λ(d).
pub fn doc_rel(g: &LinkGraph, o: &Ontology, s: &str, m: &DocumentModel) -> f64 {
    doc_rel_members(g, &g.sense_ids(s), &sensed_members(g, o, m)).score
}
