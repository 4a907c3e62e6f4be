//! Semantic document filtering with boolean concept rules.
//!
//! Documents are modeled as Wikipedia concepts, ontology concepts and words;
//! rules are boolean expressions over concepts learned by genetic programming
//! from a topic statement and labelled examples, and evaluated with implicit
//! expansion through Wikipedia link-graph relatedness.

pub mod builder;
pub mod cli;
pub mod docmodel;
pub mod evaluator;
pub mod harness;
pub mod linkgraph;
pub mod ner;
pub mod ontology;
pub mod query;
pub mod relatedness;
pub mod text;
pub mod wikifier;
