#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wikisr::docmodel::{DocumentModel, Resources};
use wikisr::linkgraph::{load_graph_dir, ConceptId, GraphBuilder, LinkGraph};
use wikisr::ner::load_gazetteer;
use wikisr::ontology::load_ontology;
use wikisr::query::{Leaf, Query};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn g1() -> LinkGraph {
    load_graph_dir(&fixture("g1")).expect("G1 loads")
}

pub fn example_resources() -> Resources {
    let dir = fixture("example");
    let mut res = Resources::new(load_graph_dir(&dir).expect("example graph loads"));
    res.gazetteer = load_gazetteer(&dir.join("gazetteer.tsv")).expect("gazetteer");
    res.ontology = load_ontology(&dir.join("ontology.tsv")).expect("ontology");
    res
}

/// Inlink sets read straight from a links file, independent of the library.
pub fn naive_inlinks(links: &Path) -> HashMap<u32, HashSet<u32>> {
    let mut out: HashMap<u32, HashSet<u32>> = HashMap::new();
    for line in fs::read_to_string(links).unwrap().lines() {
        let mut f = line.split('\t');
        let src: u32 = f.next().unwrap().trim().parse().unwrap();
        let dst: u32 = f.next().unwrap().trim().parse().unwrap();
        out.entry(dst).or_default().insert(src);
    }
    out
}

/// Brute-force relatedness over hash sets.
pub fn naive_link_rel(a: &HashSet<u32>, b: &HashSet<u32>, total: usize) -> f64 {
    let common = a.iter().filter(|x| b.contains(x)).count();
    if a.is_empty() || b.is_empty() || common == 0 {
        return 0.0;
    }
    let hi = a.len().max(b.len());
    let lo = a.len().min(b.len());
    if lo >= total {
        return if a == b { 1.0 } else { 0.0 };
    }
    let d = ((hi as f64).ln() - (common as f64).ln()) / ((total as f64).ln() - (lo as f64).ln());
    (1.0 - d).clamp(0.0, 1.0)
}

/// Random graph with `n` articles, link density `p` and a handful of
/// ambiguous anchors.
pub fn random_graph(rng: &mut ChaCha8Rng, n: u32, p: f64) -> LinkGraph {
    let mut b = GraphBuilder::new();
    for id in 1..=n {
        b.article(id, &format!("Article {id}")).unwrap();
    }
    for src in 1..=n {
        for dst in 1..=n {
            if src != dst && rng.gen_bool(p) {
                b.link(src, dst);
            }
        }
    }
    for k in 0..n.min(6) {
        let senses = rng.gen_range(1..=3);
        for _ in 0..senses {
            let target = rng.gen_range(1..=n);
            b.anchor(&format!("term{k}"), target, rng.gen_range(1..10), None);
        }
    }
    b.build().unwrap()
}

/// Random query over `leaves` with depth at most `max_depth`.
pub fn random_query(rng: &mut ChaCha8Rng, leaves: &[Leaf], max_depth: usize) -> Query {
    if max_depth <= 1 || rng.gen_bool(0.3) {
        return Query::Leaf(leaves.choose(rng).unwrap().clone());
    }
    match rng.gen_range(0..3) {
        0 => Query::negate(random_query(rng, leaves, max_depth - 1)),
        k => {
            let n = rng.gen_range(2..=3);
            let kids = (0..n)
                .map(|_| random_query(rng, leaves, max_depth - 1))
                .collect();
            if k == 1 {
                Query::And(kids)
            } else {
                Query::Or(kids)
            }
        }
    }
}

/// Random model over the concepts of `g` with words drawn from `words`.
pub fn random_model(rng: &mut ChaCha8Rng, g: &LinkGraph, words: &[&str]) -> DocumentModel {
    let mut m = DocumentModel::default();
    for id in g.concepts() {
        match rng.gen_range(0..10) {
            0 => {
                m.wiki_ne.insert(id);
            }
            1 | 2 => {
                m.wiki_general.insert(id);
            }
            _ => {}
        }
    }
    for w in words {
        if rng.gen_bool(0.2) {
            m.bow.insert(w.to_string());
        }
    }
    m
}

pub fn ids(xs: &[u32]) -> BTreeSet<ConceptId> {
    xs.iter().map(|&x| ConceptId(x)).collect()
}

/// Five wiki terminals standing for UnitedStates, Espionage, Fraud,
/// Legislation and Regulation.
pub fn planted_terminals() -> Vec<Leaf> {
    [
        "UnitedStates",
        "Espionage",
        "Fraud",
        "Legislation",
        "Regulation",
    ]
    .iter()
    .enumerate()
    .map(|(i, s)| Leaf::wiki(ConceptId(i as u32 + 1), *s, i == 0))
    .collect()
}

/// US AND Esp AND (Fraud OR Leg OR Reg) on a 5-bit assignment.
pub fn planted_truth(bits: u32) -> bool {
    let b = |i: u32| bits & (1 << i) != 0;
    b(0) && b(1) && (b(2) || b(3) || b(4))
}

pub fn model_of_bits(bits: u32) -> DocumentModel {
    DocumentModel {
        wiki_general: (0..5)
            .filter(|i| bits & (1 << i) != 0)
            .map(|i| ConceptId(i + 1))
            .collect(),
        ..Default::default()
    }
}

/// 40 positives and 160 negatives cycling through the satisfying and
/// falsifying assignments, so all 32 assignments occur.
pub fn planted_corpus() -> (Vec<DocumentModel>, Vec<DocumentModel>) {
    let (yes, no): (Vec<u32>, Vec<u32>) = (0..32).partition(|&b| planted_truth(b));
    let pos = (0..40).map(|i| model_of_bits(yes[i % yes.len()])).collect();
    let neg = (0..160).map(|i| model_of_bits(no[i % no.len()])).collect();
    (pos, neg)
}

/// Surfaces that wikify on the example graph.
pub const EXAMPLE_TERMS: [&str; 8] = [
    "U.S.",
    "espionage",
    "fraud",
    "legislation",
    "regulation",
    "lawyers",
    "trade secret",
    "China",
];

/// Writes a suite of `topics` synthetic topics over the example graph:
/// `topics/*.txt`, `corpus.jsonl`, `train.tsv`, `test.tsv`.
pub fn write_suite(dir: &Path, topics: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(dir.join("topics")).unwrap();

    let docs: Vec<Vec<usize>> = (0..60)
        .map(|_| {
            (0..EXAMPLE_TERMS.len())
                .filter(|_| rng.gen_bool(0.4))
                .collect()
        })
        .collect();
    let mut corpus = String::new();
    for (i, terms) in docs.iter().enumerate() {
        let words: Vec<&str> = terms.iter().map(|&t| EXAMPLE_TERMS[t]).collect();
        let text = format!("Notes on {} today.", words.join(" and "));
        let rec = serde_json::json!({ "id": format!("d{i:02}"), "text": text });
        writeln!(corpus, "{rec}").unwrap();
    }
    fs::write(dir.join("corpus.jsonl"), corpus).unwrap();

    let (mut train, mut test) = (String::new(), String::new());
    for t in 0..topics {
        let mut picks: Vec<usize> = (0..EXAMPLE_TERMS.len()).collect();
        picks.shuffle(&mut rng);
        let picks = &picks[..3];
        let id = format!("T{:02}", t + 1);
        let words: Vec<&str> = picks.iter().map(|&p| EXAMPLE_TERMS[p]).collect();
        let statement = format!(
            "<top>\n<num> Number: {id}\n<title> {} cases\n<desc> Description:\nReports on {} or {} matter.\n</top>\n",
            words[0], words[1], words[2]
        );
        fs::write(dir.join("topics").join(format!("{id}.txt")), statement).unwrap();
        for (i, terms) in docs.iter().enumerate() {
            let has = |k: usize| terms.contains(&picks[k]);
            let relevant = has(0) && (has(1) || has(2));
            let line = format!("{id}\td{i:02}\t{}\n", u8::from(relevant));
            if i < 30 {
                train.push_str(&line);
            } else {
                test.push_str(&line);
            }
        }
    }
    fs::write(dir.join("train.tsv"), train).unwrap();
    fs::write(dir.join("test.tsv"), test).unwrap();
}
