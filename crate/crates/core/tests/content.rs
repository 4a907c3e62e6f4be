mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use proptest::prelude::*;

use common::*;
use wikisr::docmodel::{to_sparse_vector, DocumentModel, Vocabulary};
use wikisr::harness::parse_topic_statement;
use wikisr::linkgraph::{load_graph, load_graph_dir, ConceptId, GraphError};
use wikisr::ner::{self, Gazetteer};
use wikisr::ontology::{Ontology, OntologyError};
use wikisr::wikifier::{self, link_probability, WikifyConfig};

fn write_graph(dir: &std::path::Path, pages: &str, links: &str) {
    fs::write(dir.join("pages.tsv"), pages).unwrap();
    fs::write(dir.join("redirects.tsv"), "").unwrap();
    fs::write(dir.join("anchors.tsv"), "").unwrap();
    fs::write(dir.join("links.tsv"), links).unwrap();
}

#[test]
fn graph_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), "", "");
    assert!(matches!(load_graph_dir(dir.path()), Err(GraphError::Empty)));

    write_graph(dir.path(), "1\tA\n2\tB\n", "1\t999\n");
    assert!(matches!(
        load_graph_dir(dir.path()),
        Err(GraphError::Dangling { id: 999, .. })
    ));

    write_graph(dir.path(), "1\tA\nnot a row\n", "");
    assert!(matches!(
        load_graph_dir(dir.path()),
        Err(GraphError::Malformed { line: 2, .. })
    ));

    let d = dir.path();
    let missing = load_graph(
        &d.join("nope.tsv"),
        &d.join("redirects.tsv"),
        &d.join("anchors.tsv"),
        &d.join("links.tsv"),
    );
    assert!(matches!(missing, Err(GraphError::Io { .. })));
}

#[test]
fn link_probability_from_fixture() {
    let g = g1();
    assert!((link_probability(&g, "telemarketing") - 0.05).abs() < 1e-12);
    assert_eq!(link_probability(&g, "letter"), 1.0);
    assert_eq!(link_probability(&g, "never linked"), 0.0);
}

#[test]
fn topic_statement_concepts() {
    let res = example_resources();
    let topic = parse_topic_statement(&fs::read_to_string(fixture("example/topic.txt")).unwrap());
    let got = wikifier::wikify(&res.graph, &res.wikify, &topic);
    let titles: BTreeSet<&str> = got.iter().map(|&id| res.graph.title(id).unwrap()).collect();
    assert_eq!(
        titles,
        BTreeSet::from([
            "UnitedStates",
            "Espionage",
            "Fraud",
            "Legislation",
            "Regulation"
        ])
    );
    assert!(wikifier::wikify(&res.graph, &res.wikify, "").is_empty());
}

#[test]
fn named_entities() {
    let gz = Gazetteer::parse("Goldman Sachs\torganization\n").unwrap();
    assert_eq!(
        ner::recognize(&gz, "Goldman Sachs reported profits"),
        BTreeSet::from(["Goldman Sachs".to_string()])
    );
    assert!(ner::recognize(&gz, "").is_empty());
    assert!(ner::recognize(&gz, "investment banking").is_empty());
}

#[test]
fn ontology_fixture() {
    let o = wikisr::ontology::load_ontology(&fixture("example/ontology.tsv")).unwrap();
    assert_eq!(
        o.descendants("OptionContract").unwrap(),
        BTreeSet::from(["PutOption".to_string(), "CallOption".to_string()])
    );
    assert!(o.descendants("PutOption").unwrap().is_empty());
    assert!(o.descendants("Nope").is_err());
    assert_eq!(o.wiki_page_of("PutOption").unwrap(), Some("Put option"));
    assert_eq!(o.wiki_page_of("CallOption").unwrap(), None);
    assert_eq!(
        o.profile("the put option and the option contract expired"),
        BTreeSet::from(["PutOption".to_string(), "OptionContract".to_string()])
    );

    let small = Ontology::parse(
        "f1\tPutOption\tsubClassOf\tOptionContract\nf2\tCallOption\tsubClassOf\tOptionContract\n",
    )
    .unwrap();
    assert_eq!(small.concepts().len(), 3);
    assert_eq!(small.depth(), 1);
    assert!(matches!(
        Ontology::parse("f1\tA\tsubClassOf\tB\nf1\tC\tsubClassOf\tB\n"),
        Err(OntologyError::DuplicateFact { .. })
    ));
    assert!(matches!(
        Ontology::parse("f1\tA\tsubClassOf\tB\nf2\tB\tsubClassOf\tA\n"),
        Err(OntologyError::Cycle(_))
    ));
}

#[test]
fn worked_example_document() {
    let res = example_resources();
    let text = fs::read_to_string(fixture("example/doc.txt")).unwrap();
    let m = res.model(&text);
    let titles: BTreeSet<&str> = m
        .wiki()
        .iter()
        .map(|&id| res.graph.title(id).unwrap())
        .collect();
    assert_eq!(titles, BTreeSet::from(["TradeSecret", "China", "Lawyer"]));
    assert_eq!(res.model(&text), m);
}

const PIECES: [&str; 16] = [
    "U.S.",
    "espionage",
    "fraud",
    "trade secret",
    "China",
    "Chinese",
    "lawyers",
    "Goldman Sachs",
    "Acme Corp",
    "telemarketing",
    "the",
    "and",
    ".",
    "New",
    "put option",
    "Regulation",
];

fn arb_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(PIECES.to_vec()), 0..20).prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn partition_invariant(text in arb_text()) {
        let res = example_resources();
        let m = res.model(&text);
        prop_assert!(m.wiki_ne.is_disjoint(&m.wiki_general));
        prop_assert_eq!(m.wiki(), wikifier::wikify(&res.graph, &res.wikify, &text));
        prop_assert!(m.onto.iter().all(|c| res.ontology.contains(c)));
    }

    #[test]
    fn wikify_spans_are_supported(text in arb_text()) {
        let res = example_resources();
        let spans = wikifier::wikify_spans(&res.graph, &res.wikify, &text);
        for s in &spans {
            prop_assert_eq!(&text[s.span.clone()], s.surface.as_str());
        }
        let linked: BTreeSet<ConceptId> = spans.iter().map(|s| s.concept).collect();
        prop_assert_eq!(linked, wikifier::wikify(&res.graph, &res.wikify, &text));
    }

    #[test]
    fn raising_link_threshold_never_grows(text in arb_text(), lo in 0.0f64..1.0, delta in 0.0f64..1.0) {
        let res = example_resources();
        let low = WikifyConfig { link_probability_min: lo, ..WikifyConfig::default() };
        let high = WikifyConfig { link_probability_min: (lo + delta).min(1.0), ..WikifyConfig::default() };
        let a = wikifier::wikify(&res.graph, &low, &text);
        let b = wikifier::wikify(&res.graph, &high, &text);
        prop_assert!(b.is_subset(&a));
    }

    #[test]
    fn recognized_entities_are_ngrams(text in arb_text(), extra in prop::sample::select(vec!["Acme Corp", "China", "New"])) {
        let res = example_resources();
        let before = ner::recognize(&res.gazetteer, &text);
        for e in &before {
            prop_assert!(text.contains(e.as_str()));
        }
        let mut gz = res.gazetteer.clone();
        gz.insert(extra, ner::EntityClass::Organization);
        let after = ner::recognize(&gz, &text);
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn sparse_vector_round_trip(text in arb_text()) {
        let res = example_resources();
        let m = res.model(&text);
        let vocab = Vocabulary::new(&res.graph, &res.ontology, m.bow.iter().cloned());
        let v = to_sparse_vector(&m, &vocab).unwrap();
        prop_assert_eq!(v.nnz(), m.len());
        prop_assert!((0..vocab.dim()).all(|i| v.get(i) <= 1));
        let (wiki, onto, bow) = vocab.decode(&v);
        prop_assert_eq!(wiki, m.wiki());
        prop_assert_eq!(onto, m.onto.clone());
        prop_assert_eq!(bow, m.bow.clone());
    }

    #[test]
    fn descendants_match_path_search(edges in prop::collection::vec((0u8..8, 0u8..8), 0..14)) {
        // keep only forward edges so the graph is acyclic
        let edges: BTreeSet<(u8, u8)> = edges.into_iter().filter(|(a, b)| a < b).collect();
        let facts: String = edges
            .iter()
            .enumerate()
            .map(|(i, (child, parent))| format!("f{i}\tC{child}\tsubClassOf\tC{parent}\n"))
            .collect();
        let o = Ontology::parse(&facts).unwrap();
        let mut parents: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
        for &(c, p) in &edges {
            parents.entry(c).or_default().push(p);
        }
        let reaches = |from: u8, to: u8| {
            let mut stack = vec![from];
            let mut seen = BTreeSet::new();
            while let Some(n) = stack.pop() {
                for &p in parents.get(&n).into_iter().flatten() {
                    if p == to {
                        return true;
                    }
                    if seen.insert(p) {
                        stack.push(p);
                    }
                }
            }
            false
        };
        for c in o.concepts() {
            let ci: u8 = c[1..].parse().unwrap();
            let got = o.descendants(c).unwrap();
            for d in o.concepts() {
                let di: u8 = d[1..].parse().unwrap();
                prop_assert_eq!(got.contains(d), reaches(di, ci), "{} under {}", d, c);
            }
        }
    }
}

#[test]
fn empty_model_vector() {
    let res = example_resources();
    let vocab = Vocabulary::new(&res.graph, &res.ontology, Vec::<String>::new());
    let v = to_sparse_vector(&DocumentModel::default(), &vocab).unwrap();
    assert_eq!(v.nnz(), 0);
    assert_eq!(
        v.dim,
        res.graph.total_articles() + res.ontology.concepts().len()
    );
}
