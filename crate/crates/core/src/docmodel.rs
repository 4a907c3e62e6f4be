//! Three-part document model: Wikipedia concepts (split into named entities
//! and general concepts), ontology concepts, and a bag of words.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linkgraph::{ConceptId, LinkGraph};
use crate::ner::{self, Gazetteer};
use crate::ontology::Ontology;
use crate::relatedness::Relate;
use crate::text;
use crate::wikifier::{self, WikifyConfig};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone)]
pub struct Stopwords(HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

impl Stopwords {
    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(content: &str) -> Self {
        Self(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }
}

/// Everything needed to model a document.
#[derive(Debug, Clone)]
pub struct Resources {
    pub graph: LinkGraph,
    pub ontology: Ontology,
    pub gazetteer: Gazetteer,
    pub stopwords: Stopwords,
    pub wikify: WikifyConfig,
    /// Count an ontology concept as present when one of its descendants is.
    pub subsumption: bool,
}

impl Resources {
    pub fn new(graph: LinkGraph) -> Self {
        Self {
            graph,
            ontology: Ontology::empty(),
            gazetteer: Gazetteer::new(),
            stopwords: Stopwords::default(),
            wikify: WikifyConfig::default(),
            subsumption: true,
        }
    }

    pub fn model(&self, text: &str) -> DocumentModel {
        build_model(self, &self.graph, text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentModel {
    pub wiki_ne: BTreeSet<ConceptId>,
    pub wiki_general: BTreeSet<ConceptId>,
    pub onto: BTreeSet<String>,
    pub bow: BTreeSet<String>,
}

impl DocumentModel {
    /// Λ_W(d) = Λ_N(d) ∪ Λ_G(d).
    pub fn wiki(&self) -> BTreeSet<ConceptId> {
        self.wiki_ne.union(&self.wiki_general).copied().collect()
    }

    pub fn has_wiki(&self, w: ConceptId) -> bool {
        self.wiki_ne.contains(&w) || self.wiki_general.contains(&w)
    }

    pub fn is_empty(&self) -> bool {
        self.wiki_ne.is_empty()
            && self.wiki_general.is_empty()
            && self.onto.is_empty()
            && self.bow.is_empty()
    }

    /// Number of members across all parts.
    pub fn len(&self) -> usize {
        self.wiki_ne.len() + self.wiki_general.len() + self.onto.len() + self.bow.len()
    }
}

/// Builds Λ(d). A wikified concept is a named entity when one of its
/// supporting spans overlaps a recognized entity span.
pub fn build_model(res: &Resources, rel: &impl Relate, text: &str) -> DocumentModel {
    let linked = wikifier::wikify_spans(rel, &res.wikify, text);
    let entities = ner::recognize_spans(&res.gazetteer, text);

    let mut m = DocumentModel::default();
    for l in &linked {
        let overlaps = entities
            .iter()
            .any(|(span, _)| span.start < l.span.end && l.span.start < span.end);
        if overlaps {
            m.wiki_ne.insert(l.concept);
        }
    }
    for l in &linked {
        if !m.wiki_ne.contains(&l.concept) {
            m.wiki_general.insert(l.concept);
        }
    }
    m.onto = res.ontology.profile(text);
    m.bow = text::words(text)
        .filter(|w| !res.stopwords.contains(w))
        .collect();
    m
}

/// JSONL serialization of a modeled document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub doc_id: String,
    #[serde(flatten)]
    pub model: DocumentModel,
}

/// A coordinate of the joint indicator space.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Member {
    Wiki(ConceptId),
    Onto(String),
    Word(String),
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::Wiki(id) => write!(f, "wiki:{id}"),
            Member::Onto(c) => write!(f, "onto:{c}"),
            Member::Word(w) => write!(f, "word:{w}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("no coordinate for {0}")]
pub struct UnknownCoordinate(pub Member);

/// Joint index over W ∪ C ∪ Σ: Wikipedia concepts first, then ontology
/// concepts, then words.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    index: BTreeMap<Member, usize>,
    members: Vec<Member>,
}

impl Vocabulary {
    pub fn new<I, S>(g: &LinkGraph, o: &Ontology, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::default();
        for w in g.concepts() {
            v.push(Member::Wiki(w));
        }
        for c in o.concepts() {
            v.push(Member::Onto(c.clone()));
        }
        let words: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        for w in words {
            v.push(Member::Word(w));
        }
        v
    }

    fn push(&mut self, m: Member) {
        if !self.index.contains_key(&m) {
            self.index.insert(m.clone(), self.members.len());
            self.members.push(m);
        }
    }

    /// N = |W| + |C| + |Σ-vocabulary|.
    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn coordinate(&self, m: &Member) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn member(&self, i: usize) -> Option<&Member> {
        self.members.get(i)
    }

    /// Splits the nonzero coordinates of `v` back into (Λ_W, Λ_O, Λ_Σ).
    pub fn decode(
        &self,
        v: &SparseVector,
    ) -> (BTreeSet<ConceptId>, BTreeSet<String>, BTreeSet<String>) {
        let (mut wiki, mut onto, mut bow) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
        for &i in &v.indices {
            match &self.members[i] {
                Member::Wiki(w) => {
                    wiki.insert(*w);
                }
                Member::Onto(c) => {
                    onto.insert(c.clone());
                }
                Member::Word(w) => {
                    bow.insert(w.clone());
                }
            }
        }
        (wiki, onto, bow)
    }
}

/// {0,1} indicator vector stored as its sorted nonzero coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<usize>,
}

impl SparseVector {
    pub fn get(&self, i: usize) -> u8 {
        u8::from(self.indices.binary_search(&i).is_ok())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

pub fn to_sparse_vector(
    m: &DocumentModel,
    vocab: &Vocabulary,
) -> Result<SparseVector, UnknownCoordinate> {
    let members = m
        .wiki_ne
        .iter()
        .chain(&m.wiki_general)
        .map(|&w| Member::Wiki(w))
        .chain(m.onto.iter().cloned().map(Member::Onto))
        .chain(m.bow.iter().cloned().map(Member::Word));
    let mut indices = Vec::with_capacity(m.len());
    for member in members {
        match vocab.coordinate(&member) {
            Some(i) => indices.push(i),
            None => return Err(UnknownCoordinate(member)),
        }
    }
    indices.sort_unstable();
    indices.dedup();
    Ok(SparseVector {
        dim: vocab.dim(),
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkgraph::GraphBuilder;

    fn resources() -> Resources {
        let mut b = GraphBuilder::new();
        b.article(1, "GoldmanSachs").unwrap();
        b.article(2, "InvestmentBanking").unwrap();
        b.article(3, "Bank").unwrap();
        b.anchor("Goldman Sachs", 1, 10, None);
        b.anchor("investment banking", 2, 10, None);
        b.link(3, 1).link(3, 2);
        let mut res = Resources::new(b.build().unwrap());
        res.gazetteer = Gazetteer::parse("Goldman Sachs\torganization\n").unwrap();
        res.ontology = Ontology::parse("f1\tPutOption\tsubClassOf\tOptionContract\n").unwrap();
        res
    }

    #[test]
    fn entity_and_general_split() {
        let res = resources();
        let m = res.model("The bank Goldman Sachs expanded its investment banking arm.");
        assert_eq!(m.wiki_ne, BTreeSet::from([ConceptId(1)]));
        assert_eq!(m.wiki_general, BTreeSet::from([ConceptId(2)]));
        assert!(m.bow.contains("goldman") && m.bow.contains("banking"));
        assert!(!m.bow.contains("the") && !m.bow.contains("its"));
    }

    #[test]
    fn empty_document() {
        let res = resources();
        let m = res.model("");
        assert!(m.is_empty());
    }

    #[test]
    fn entity_outside_graph() {
        let res = resources();
        let m = res.model("shares of Acme Corp rose");
        assert!(m.wiki_ne.is_empty());
        assert!(m.bow.contains("acme"));
    }

    #[test]
    fn ontology_part() {
        let res = resources();
        let m = res.model("a put option on the index");
        assert_eq!(m.onto, BTreeSet::from(["PutOption".to_string()]));
    }

    #[test]
    fn sparse_vector_counts() {
        let res = resources();
        let vocab = Vocabulary::new(
            &res.graph,
            &res.ontology,
            ["alpha", "beta", "gamma", "delta", "eps"],
        );
        assert_eq!(vocab.dim(), 3 + 2 + 5);
        let empty = to_sparse_vector(&DocumentModel::default(), &vocab).unwrap();
        assert_eq!(empty.nnz(), 0);
        assert!((0..vocab.dim()).all(|i| empty.get(i) == 0));

        let m = DocumentModel {
            wiki_ne: BTreeSet::from([ConceptId(1)]),
            wiki_general: BTreeSet::from([ConceptId(2)]),
            onto: BTreeSet::from(["PutOption".to_string()]),
            bow: ["alpha", "beta", "gamma", "delta", "eps"]
                .into_iter()
                .map(String::from)
                .collect(),
        };
        let v = to_sparse_vector(&m, &vocab).unwrap();
        assert_eq!(v.nnz(), 8);

        let mut unknown = m.clone();
        unknown.bow.insert("zeta".into());
        assert!(to_sparse_vector(&unknown, &vocab).is_err());
    }

    #[test]
    fn record_json_shape() {
        let rec = ModelRecord {
            doc_id: "d1".into(),
            model: DocumentModel {
                wiki_ne: BTreeSet::from([ConceptId(1)]),
                ..Default::default()
            },
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            json,
            r#"{"doc_id":"d1","wiki_ne":[1],"wiki_general":[],"onto":[],"bow":[]}"#
        );
        let back: ModelRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
    }
}
