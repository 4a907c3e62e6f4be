//! Named-entity recognition from a gazetteer plus a capitalization rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::text::{self, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityClass {
    Person,
    Organization,
    Location,
    Other,
}

impl std::str::FromStr for EntityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "person" => Ok(Self::Person),
            "organization" | "organisation" => Ok(Self::Organization),
            "location" => Ok(Self::Location),
            "other" => Ok(Self::Other),
            other => Err(format!("unknown entity class {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GazetteerError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate surface {surface:?}")]
    Duplicate { line: usize, surface: String },
    #[error("gazetteer file has no entries")]
    Empty,
    #[error("cannot read gazetteer: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<String, EntityClass>,
    max_tokens: usize,
}

pub fn load_gazetteer(path: &Path) -> Result<Gazetteer, GazetteerError> {
    let gz = Gazetteer::parse(&fs::read_to_string(path)?)?;
    if gz.is_empty() {
        return Err(GazetteerError::Empty);
    }
    Ok(gz)
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `surface<TAB>class` lines.
    pub fn parse(content: &str) -> Result<Self, GazetteerError> {
        let mut gz = Gazetteer::new();
        for (i, raw) in content.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() {
                continue;
            }
            let (surface, class) = raw.split_once('\t').ok_or(GazetteerError::Malformed {
                line,
                reason: "expected surface<TAB>class".into(),
            })?;
            let class = class
                .parse()
                .map_err(|reason| GazetteerError::Malformed { line, reason })?;
            if surface.trim().is_empty() {
                return Err(GazetteerError::Malformed {
                    line,
                    reason: "empty surface".into(),
                });
            }
            if !gz.insert(surface, class) {
                return Err(GazetteerError::Duplicate {
                    line,
                    surface: surface.to_string(),
                });
            }
        }
        Ok(gz)
    }

    /// Adds an entry; false if the surface was already present.
    pub fn insert(&mut self, surface: &str, class: EntityClass) -> bool {
        let key = surface.split_whitespace().collect::<Vec<_>>().join(" ");
        if self.entries.contains_key(&key) {
            return false;
        }
        self.max_tokens = self.max_tokens.max(text::tokenize(&key).len().max(1));
        self.entries.insert(key, class);
        true
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.entries.contains_key(surface)
    }

    pub fn class_of(&self, surface: &str) -> Option<EntityClass> {
        self.entries.get(surface).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn capitalized(text: &str, t: &Token) -> bool {
    text[t.span.clone()]
        .chars()
        .next()
        .is_some_and(char::is_uppercase)
}

/// Entity spans: every n-gram matching a gazetteer entry (case-sensitive),
/// plus every maximal run of two or more adjacent capitalized tokens that
/// does not begin a sentence. A run that starts a sentence is considered from
/// its second token on. Sorted by span, deduplicated.
pub fn recognize_spans(gz: &Gazetteer, text: &str) -> Vec<(Range<usize>, String)> {
    let tokens = text::tokenize(text);
    let mut spans: BTreeSet<(usize, usize)> = BTreeSet::new();

    if !gz.is_empty() {
        for i in 0..tokens.len() {
            for n in 1..=gz.max_tokens.min(tokens.len() - i) {
                for gram in text::ngram_variants(text, &tokens, i, n) {
                    if gz.contains(&gram.key) {
                        spans.insert((gram.span.start, gram.span.end));
                    }
                }
            }
        }
    }

    let mut i = 0;
    while i < tokens.len() {
        if !capitalized(text, &tokens[i]) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < tokens.len()
            && text::adjacent(text, &tokens, j)
            && capitalized(text, &tokens[j + 1])
        {
            j += 1;
        }
        let start = if tokens[i].sentence_start { i + 1 } else { i };
        if j > start {
            spans.insert((tokens[start].span.start, tokens[j].span.end));
        }
        i = j + 1;
    }

    spans
        .into_iter()
        .map(|(s, e)| (s..e, text[s..e].to_string()))
        .collect()
}

/// NER(d): the set of n-grams of `text` recognized as named entities.
pub fn recognize(gz: &Gazetteer, text: &str) -> BTreeSet<String> {
    recognize_spans(gz, text)
        .into_iter()
        .map(|(_, s)| s)
        .collect()
}
