//! Boolean concept queries: expression tree, parser and canonical serializer.
//!
//! Concrete syntax:
//!
//! ```text
//! expr  := or
//! or    := and ("OR" and)*
//! and   := unary ("AND" unary)*
//! unary := "NOT" unary | "(" expr ")" | STRING
//! ```
//!
//! Keywords are case-insensitive; leaves are double-quoted concept surfaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linkgraph::{ConceptId, LinkGraph};
use crate::ner::Gazetteer;
use crate::ontology::Ontology;

pub const DEFAULT_MAX_DEPTH: usize = 5;

/// What a query leaf refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConceptRef {
    Wiki(ConceptId),
    Onto(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Leaf {
    pub concept: ConceptRef,
    /// Display surface; what the serializer writes between quotes.
    pub surface: String,
    pub named_entity: bool,
}

impl Leaf {
    pub fn wiki(id: ConceptId, surface: impl Into<String>, named_entity: bool) -> Self {
        Self {
            concept: ConceptRef::Wiki(id),
            surface: surface.into(),
            named_entity,
        }
    }

    pub fn onto(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            concept: ConceptRef::Onto(name.clone()),
            surface: name,
            named_entity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Query {
    Leaf(Leaf),
    And(Vec<Query>),
    Or(Vec<Query>),
    Not(Box<Query>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("invalid query: {0}")]
    Invalid(String),
}

impl Query {
    pub fn leaf(l: Leaf) -> Self {
        Query::Leaf(l)
    }

    pub fn negate(q: Query) -> Self {
        Query::Not(Box::new(q))
    }

    /// Depth with a single leaf at depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Query::Leaf(_) => 1,
            Query::Not(c) => 1 + c.depth(),
            Query::And(cs) | Query::Or(cs) => 1 + cs.iter().map(Query::depth).max().unwrap_or(0),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Query::Leaf(_) => 1,
            Query::Not(c) => 1 + c.node_count(),
            Query::And(cs) | Query::Or(cs) => 1 + cs.iter().map(Query::node_count).sum::<usize>(),
        }
    }

    /// Leaves in left-to-right order, repeats included.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            Query::Leaf(l) => out.push(l),
            Query::Not(c) => c.collect_leaves(out),
            Query::And(cs) | Query::Or(cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Structural checks: operator arity and depth bound.
    pub fn validate(&self, max_depth: usize) -> Result<(), QueryError> {
        fn arity(q: &Query) -> Result<(), QueryError> {
            match q {
                Query::Leaf(_) => Ok(()),
                Query::Not(c) => arity(c),
                Query::And(cs) | Query::Or(cs) => {
                    if cs.len() < 2 {
                        return Err(QueryError::Invalid(
                            "AND/OR nodes need at least two children".into(),
                        ));
                    }
                    cs.iter().try_for_each(arity)
                }
            }
        }
        arity(self)?;
        if self.depth() > max_depth {
            return Err(QueryError::Invalid(format!(
                "depth {} exceeds maximum {max_depth}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// Evaluates the expression given a truth value for each leaf.
    pub fn eval_with(&self, value: &mut impl FnMut(&Leaf) -> bool) -> bool {
        match self {
            Query::Leaf(l) => value(l),
            Query::Not(c) => !c.eval_with(value),
            Query::And(cs) => cs.iter().all(|c| c.eval_with(value)),
            Query::Or(cs) => cs.iter().any(|c| c.eval_with(value)),
        }
    }

    /// Canonical form: every compound node is parenthesized except an AND/OR
    /// at the top level; children keep their construction order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, true);
        out
    }

    fn write(&self, out: &mut String, top: bool) {
        match self {
            Query::Leaf(l) => write_string(out, &l.surface),
            Query::Not(c) => {
                out.push_str("(NOT ");
                c.write(out, false);
                out.push(')');
            }
            Query::And(cs) | Query::Or(cs) => {
                let op = if matches!(self, Query::And(_)) {
                    " AND "
                } else {
                    " OR "
                };
                if !top {
                    out.push('(');
                }
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(op);
                    }
                    c.write(out, false);
                }
                if !top {
                    out.push(')');
                }
            }
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

pub fn serialize_query(q: &Query) -> String {
    q.serialize()
}

/// V_q: the distinct concepts of `q`, keyed by concept reference.
pub fn concepts_of(q: &Query) -> BTreeMap<ConceptRef, Leaf> {
    let mut out = BTreeMap::new();
    for l in q.leaves() {
        out.entry(l.concept.clone()).or_insert_with(|| l.clone());
    }
    out
}

/// The concept vocabulary V: surface -> leaf.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    leaves: BTreeMap<String, Leaf>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_leaves<I: IntoIterator<Item = Leaf>>(leaves: I) -> Self {
        let mut v = Self::new();
        for l in leaves {
            v.insert(l);
        }
        v
    }

    /// Every article (by title) and every ontology concept (by name). An
    /// article title shadows an ontology concept of the same name. Articles
    /// whose title is a gazetteer entry are flagged as named entities.
    pub fn from_resources(g: &LinkGraph, o: &Ontology, gz: &Gazetteer) -> Self {
        let mut v = Self::new();
        for c in o.concepts() {
            v.insert(Leaf::onto(c.clone()));
        }
        for id in g.concepts() {
            let title = g.title(id).unwrap_or_default();
            v.insert(Leaf::wiki(id, title, gz.contains(title)));
        }
        v
    }

    pub fn insert(&mut self, leaf: Leaf) {
        self.leaves.insert(leaf.surface.clone(), leaf);
    }

    pub fn get(&self, surface: &str) -> Option<&Leaf> {
        self.leaves.get(surface)
    }

    pub fn contains(&self, leaf: &Leaf) -> bool {
        self.leaves
            .get(&leaf.surface)
            .is_some_and(|l| l.concept == leaf.concept)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.leaves.values()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Str(String),
    And,
    Or,
    Not,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            chars.next();
            out.push((pos, Tok::LParen));
        } else if c == ')' {
            chars.next();
            out.push((pos, Tok::RParen));
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            while let Some((_, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, e)) => s.push(e),
                        None => break,
                    },
                    c => s.push(c),
                }
            }
            if !closed {
                return Err(QueryError::Syntax {
                    pos,
                    msg: "unterminated string".into(),
                });
            }
            out.push((pos, Tok::Str(s)));
        } else if c.is_alphabetic() {
            let mut word = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if !c.is_alphanumeric() {
                    break;
                }
                word.push(c);
                chars.next();
            }
            let tok = match word.to_ascii_uppercase().as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => {
                    return Err(QueryError::Syntax {
                        pos,
                        msg: format!("unexpected word {word:?}; concepts must be quoted"),
                    })
                }
            };
            out.push((pos, tok));
        } else {
            return Err(QueryError::Syntax {
                pos,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    vocab: &'a Vocabulary,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, msg: &str) -> QueryError {
        let msg = if self.pos >= self.toks.len() {
            format!("{msg} at end of input")
        } else {
            msg.to_string()
        };
        QueryError::Syntax {
            pos: self.here(),
            msg,
        }
    }

    fn or(&mut self) -> Result<Query, QueryError> {
        let mut items = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            items.push(self.and()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Query::Or(items)
        })
    }

    fn and(&mut self) -> Result<Query, QueryError> {
        let mut items = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Query::And(items)
        })
    }

    fn unary(&mut self) -> Result<Query, QueryError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Query::negate(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                self.vocab
                    .get(&s)
                    .cloned()
                    .map(Query::Leaf)
                    .ok_or(QueryError::UnknownConcept(s))
            }
            _ => Err(self.error("expected a quoted concept, NOT, or '('")),
        }
    }
}

/// Parses `text`, resolving every leaf against `vocab`.
pub fn parse_query(text: &str, vocab: &Vocabulary) -> Result<Query, QueryError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        end: text.len(),
        vocab,
    };
    let q = p.or()?;
    if p.pos < p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(q)
}

/// Leaves of `q` that are not in `allowed`, by surface.
pub fn foreign_leaves(q: &Query, allowed: &BTreeSet<ConceptRef>) -> Vec<String> {
    q.leaves()
        .into_iter()
        .filter(|l| !allowed.contains(&l.concept))
        .map(|l| l.surface.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str =
        r#""UnitedStates" AND "Espionage" AND ("Fraud" OR "Legislation" OR "Regulation")"#;

    fn vocab() -> Vocabulary {
        Vocabulary::from_leaves(
            [
                "UnitedStates",
                "Espionage",
                "Fraud",
                "Legislation",
                "Regulation",
            ]
            .iter()
            .enumerate()
            .map(|(i, s)| Leaf::wiki(ConceptId(i as u32 + 1), *s, i == 0)),
        )
    }

    #[test]
    fn parses_example_rule() {
        let q = parse_query(EXAMPLE, &vocab()).unwrap();
        let Query::And(items) = &q else {
            panic!("expected AND at the root")
        };
        assert_eq!(items.len(), 3);
        assert!(matches!(&items[2], Query::Or(or) if or.len() == 3));
        assert_eq!(q.leaves().len(), 5);
        assert_eq!(concepts_of(&q).len(), 5);
        assert_eq!(q.serialize(), EXAMPLE);
        assert!(q.leaves()[0].named_entity);
    }

    #[test]
    fn not_and_leaf_forms() {
        let v = vocab();
        let q = parse_query(r#"NOT "Fraud""#, &v).unwrap();
        assert!(matches!(&q, Query::Not(c) if matches!(**c, Query::Leaf(_))));
        assert_eq!(q.serialize(), r#"(NOT "Fraud")"#);
        let q = parse_query(r#""Fraud""#, &v).unwrap();
        assert_eq!(q.serialize(), r#""Fraud""#);
        let q = parse_query(r#"not "Fraud" and "Espionage""#, &v).unwrap();
        assert_eq!(q.serialize(), r#"(NOT "Fraud") AND "Espionage""#);
    }

    #[test]
    fn precedence() {
        let q = parse_query(r#""Fraud" OR "Espionage" AND "Legislation""#, &vocab()).unwrap();
        assert_eq!(
            q.serialize(),
            r#""Fraud" OR ("Espionage" AND "Legislation")"#
        );
    }

    #[test]
    fn syntax_errors() {
        let err = parse_query(r#""Fraud" AND"#, &vocab()).unwrap_err();
        assert_eq!(
            err,
            QueryError::Syntax {
                pos: 11,
                msg: "expected a quoted concept, NOT, or '(' at end of input".into()
            }
        );
        assert!(matches!(
            parse_query(r#"("Fraud""#, &vocab()),
            Err(QueryError::Syntax { pos: 8, .. })
        ));
        assert!(matches!(
            parse_query(r#""Fraud"#, &vocab()),
            Err(QueryError::Syntax { pos: 0, .. })
        ));
        assert!(matches!(
            parse_query(r#"Fraud"#, &vocab()),
            Err(QueryError::Syntax { .. })
        ));
        assert!(matches!(
            parse_query("", &vocab()),
            Err(QueryError::Syntax { pos: 0, .. })
        ));
    }

    #[test]
    fn unknown_leaf() {
        assert_eq!(
            parse_query(r#""Fraud" OR "Piracy""#, &vocab()).unwrap_err(),
            QueryError::UnknownConcept("Piracy".into())
        );
    }

    #[test]
    fn repeated_leaf_counted_once() {
        let q = parse_query(r#""Fraud" AND (NOT "Fraud")"#, &vocab()).unwrap();
        assert_eq!(q.leaves().len(), 2);
        assert_eq!(concepts_of(&q).len(), 1);
    }

    #[test]
    fn escaped_quotes_round_trip() {
        let v = Vocabulary::from_leaves([Leaf::onto(r#"Say "hi"\now"#)]);
        let q = Query::Leaf(v.leaves().next().unwrap().clone());
        assert_eq!(parse_query(&q.serialize(), &v).unwrap(), q);
    }

    #[test]
    fn validation() {
        let v = vocab();
        let q = parse_query(EXAMPLE, &v).unwrap();
        assert_eq!(q.depth(), 3);
        assert!(q.validate(5).is_ok());
        assert!(q.validate(2).is_err());
        let bad = Query::And(vec![Query::Leaf(v.get("Fraud").unwrap().clone())]);
        assert!(bad.validate(5).is_err());
    }
}
