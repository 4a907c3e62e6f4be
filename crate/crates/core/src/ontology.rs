//! Lightweight fact-triple ontology (subClassOf / hasWikiPage / label / type)
//! and the ontology content profiler.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use crate::text;

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("line {line}: malformed triple: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate fact identifier {id:?}")]
    DuplicateFact { line: usize, id: String },
    #[error("subClassOf cycle through {0:?}")]
    Cycle(String),
    #[error("unknown ontology concept {0:?}")]
    UnknownConcept(String),
    #[error("cannot read ontology: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    SubClassOf,
    HasWikiPage,
    Label,
    Type,
}

impl Relation {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "subClassOf" => Some(Self::SubClassOf),
            "hasWikiPage" => Some(Self::HasWikiPage),
            "label" => Some(Self::Label),
            "type" => Some(Self::Type),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ontology {
    facts: BTreeMap<String, Fact>,
    concepts: BTreeSet<String>,
    labels: BTreeMap<String, BTreeSet<String>>,
    /// lowercased label -> concepts carrying it
    label_index: HashMap<String, BTreeSet<String>>,
    max_label_tokens: usize,
    parents: BTreeMap<String, BTreeSet<String>>,
    children: BTreeMap<String, BTreeSet<String>>,
    wiki_pages: BTreeMap<String, String>,
}

pub fn load_ontology(path: &Path) -> Result<Ontology, OntologyError> {
    Ontology::parse(&fs::read_to_string(path)?)
}

impl Ontology {
    /// An ontology without concepts; profiles every document to the empty set.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses `fact_id<TAB>subject<TAB>relation<TAB>object` lines.
    pub fn parse(content: &str) -> Result<Self, OntologyError> {
        let mut facts = BTreeMap::new();
        for (i, raw) in content.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = raw.split('\t').collect();
            if f.len() != 4 {
                return Err(OntologyError::Malformed {
                    line,
                    reason: format!("expected 4 fields, found {}", f.len()),
                });
            }
            let relation = Relation::parse(f[2]).ok_or_else(|| OntologyError::Malformed {
                line,
                reason: format!("unknown relation {:?}", f[2]),
            })?;
            if f[0].is_empty() || f[1].is_empty() || f[3].trim().is_empty() {
                return Err(OntologyError::Malformed {
                    line,
                    reason: "empty field".into(),
                });
            }
            let fact = Fact {
                subject: f[1].to_string(),
                relation,
                object: f[3].to_string(),
            };
            if facts.insert(f[0].to_string(), fact).is_some() {
                return Err(OntologyError::DuplicateFact {
                    line,
                    id: f[0].to_string(),
                });
            }
        }
        Self::from_facts(facts)
    }

    fn from_facts(facts: BTreeMap<String, Fact>) -> Result<Self, OntologyError> {
        let mut o = Ontology::default();
        for fact in facts.values() {
            o.concepts.insert(fact.subject.clone());
            match fact.relation {
                Relation::SubClassOf => {
                    o.concepts.insert(fact.object.clone());
                    o.parents
                        .entry(fact.subject.clone())
                        .or_default()
                        .insert(fact.object.clone());
                    o.children
                        .entry(fact.object.clone())
                        .or_default()
                        .insert(fact.subject.clone());
                }
                Relation::HasWikiPage => {
                    o.wiki_pages
                        .insert(fact.subject.clone(), fact.object.clone());
                }
                Relation::Label => {
                    o.labels
                        .entry(fact.subject.clone())
                        .or_default()
                        .insert(fact.object.to_lowercase());
                }
                Relation::Type => {}
            }
        }
        for c in &o.concepts {
            o.labels
                .entry(c.clone())
                .or_default()
                .insert(text::split_camel_case(c));
        }
        for (c, labels) in &o.labels {
            for l in labels {
                o.max_label_tokens = o.max_label_tokens.max(l.split_whitespace().count());
                o.label_index
                    .entry(l.clone())
                    .or_default()
                    .insert(c.clone());
            }
        }
        o.facts = facts;
        o.check_acyclic()?;
        Ok(o)
    }

    fn check_acyclic(&self) -> Result<(), OntologyError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: HashMap<&str, Mark> = HashMap::new();
        for start in &self.concepts {
            if marks.contains_key(start.as_str()) {
                continue;
            }
            // iterative DFS over parent edges
            let mut stack: Vec<(&str, Vec<&str>)> = vec![(start, self.parents_of(start))];
            marks.insert(start, Mark::Open);
            while let Some(top) = stack.last_mut() {
                let node = top.0;
                match top.1.pop() {
                    Some(next) => match marks.get(next) {
                        Some(Mark::Open) => return Err(OntologyError::Cycle(next.to_string())),
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(next, Mark::Open);
                            let ps = self.parents_of(next);
                            stack.push((next, ps));
                        }
                    },
                    None => {
                        marks.insert(node, Mark::Done);
                        stack.pop();
                    }
                }
            }
        }
        Ok(())
    }

    fn parents_of(&self, c: &str) -> Vec<&str> {
        self.parents
            .get(c)
            .map(|ps| ps.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn concepts(&self) -> &BTreeSet<String> {
        &self.concepts
    }

    pub fn contains(&self, c: &str) -> bool {
        self.concepts.contains(c)
    }

    pub fn facts(&self) -> &BTreeMap<String, Fact> {
        &self.facts
    }

    pub fn labels(&self, c: &str) -> impl Iterator<Item = &str> {
        self.labels.get(c).into_iter().flatten().map(String::as_str)
    }

    /// Length of the longest subClassOf chain.
    pub fn depth(&self) -> usize {
        fn height(o: &Ontology, c: &str, memo: &mut HashMap<String, usize>) -> usize {
            if let Some(&h) = memo.get(c) {
                return h;
            }
            let h = o
                .parents_of(c)
                .into_iter()
                .map(|p| 1 + height(o, p, memo))
                .max()
                .unwrap_or(0);
            memo.insert(c.to_string(), h);
            h
        }
        let mut memo = HashMap::new();
        self.concepts
            .iter()
            .map(|c| height(self, c, &mut memo))
            .max()
            .unwrap_or(0)
    }

    /// Concepts whose label occurs in `text` (case-insensitive, longest match).
    pub fn profile(&self, text: &str) -> BTreeSet<String> {
        if self.label_index.is_empty() {
            return BTreeSet::new();
        }
        let tokens = text::tokenize(text);
        text::scan_longest(text, &tokens, self.max_label_tokens, |key| {
            self.label_index.get(&key.to_lowercase())
        })
        .into_iter()
        .flat_map(|m| m.value.iter().cloned())
        .collect()
    }

    /// All concepts below `c` in the subClassOf order, excluding `c`.
    pub fn descendants(&self, c: &str) -> Result<BTreeSet<String>, OntologyError> {
        if !self.contains(c) {
            return Err(OntologyError::UnknownConcept(c.to_string()));
        }
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([c]);
        while let Some(next) = queue.pop_front() {
            for child in self.children.get(next).into_iter().flatten() {
                if out.insert(child.clone()) {
                    queue.push_back(child);
                }
            }
        }
        Ok(out)
    }

    pub fn wiki_page_of(&self, c: &str) -> Result<Option<&str>, OntologyError> {
        if !self.contains(c) {
            return Err(OntologyError::UnknownConcept(c.to_string()));
        }
        Ok(self.wiki_pages.get(c).map(String::as_str))
    }

    /// True if `c` or one of its descendants is in `present`.
    pub fn subsumed_in(&self, c: &str, present: &BTreeSet<String>) -> bool {
        if present.contains(c) {
            return true;
        }
        self.descendants(c)
            .map(|d| d.iter().any(|x| present.contains(x)))
            .unwrap_or(false)
    }
}
