//! Rule induction by genetic programming over boolean concept queries.
//!
//! Terminals are the concepts found in the topic statement. Individuals are
//! binary AND/OR trees with unary NOT; fitness is the F-score of exact-match
//! evaluation on the labelled training documents. The search is sequential
//! and fully determined by the seed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::docmodel::{DocumentModel, Resources};
use crate::evaluator;
use crate::harness::f_score;
use crate::ontology::Ontology;
use crate::query::{Leaf, Query, DEFAULT_MAX_DEPTH};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BuildError {
    #[error("topic statement yields no concepts")]
    EmptyTerminalSet,
    #[error("too many terminals ({0}); at most 64 are supported")]
    TooManyTerminals(usize),
    #[error("training set has no positive examples")]
    NoPositives,
    #[error("invalid GP configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub max_depth: usize,
    pub elitism: usize,
    pub rng_seed: u64,
}

impl GpConfig {
    /// Default search parameters; the seed has no default.
    pub fn with_seed(rng_seed: u64) -> Self {
        Self {
            population_size: 100,
            generations: 50,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            max_depth: DEFAULT_MAX_DEPTH,
            elitism: 1,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        let err = |m: &str| Err(BuildError::Config(m.to_string()));
        if self.population_size == 0 || self.tournament_size == 0 {
            return err("population_size and tournament_size must be at least 1");
        }
        if self.max_depth == 0 {
            return err("max_depth must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate)
        {
            return err("rates must lie in [0, 1]");
        }
        if self.elitism > self.population_size {
            return err("elitism cannot exceed population_size");
        }
        Ok(())
    }
}

/// Labelled training documents D_t.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub positives: Vec<DocumentModel>,
    pub negatives: Vec<DocumentModel>,
}

impl TrainingSet {
    pub fn new(
        positives: Vec<DocumentModel>,
        negatives: Vec<DocumentModel>,
    ) -> Result<Self, BuildError> {
        if positives.is_empty() {
            return Err(BuildError::NoPositives);
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    /// negatives / positives.
    pub fn ratio(&self) -> f64 {
        if self.positives.is_empty() {
            return 0.0;
        }
        self.negatives.len() as f64 / self.positives.len() as f64
    }

    pub fn labelled(&self) -> impl Iterator<Item = (&DocumentModel, bool)> {
        self.positives
            .iter()
            .map(|m| (m, true))
            .chain(self.negatives.iter().map(|m| (m, false)))
    }
}

/// How a leaf is tested for direct presence during exact matching.
#[derive(Debug, Clone, Copy)]
pub struct ExactMatch<'a> {
    pub ontology: &'a Ontology,
    pub subsumption: bool,
}

impl<'a> ExactMatch<'a> {
    pub fn new(ontology: &'a Ontology, subsumption: bool) -> Self {
        Self {
            ontology,
            subsumption,
        }
    }

    pub fn from_resources(res: &'a Resources) -> Self {
        Self::new(&res.ontology, res.subsumption)
    }

    pub fn present(&self, leaf: &Leaf, m: &DocumentModel) -> bool {
        evaluator::directly_present(self.ontology, self.subsumption, leaf, m)
    }
}

/// V_q candidates: Λ_W(t) ∪ Λ_O(t) of the topic statement, with the named
/// entity flag taken from the statement's own model.
pub fn terminal_set(res: &Resources, topic: &str) -> Result<Vec<Leaf>, BuildError> {
    let m = res.model(topic);
    let g = &res.graph;
    let mut out: Vec<Leaf> = m
        .wiki()
        .into_iter()
        .map(|id| Leaf::wiki(id, g.title(id).unwrap_or_default(), m.wiki_ne.contains(&id)))
        .collect();
    out.extend(m.onto.iter().cloned().map(Leaf::onto));
    if out.is_empty() {
        return Err(BuildError::EmptyTerminalSet);
    }
    Ok(out)
}

/// Training F-score of `q` under exact-match evaluation.
pub fn fitness(q: &Query, train: &TrainingSet, matcher: &ExactMatch) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (m, relevant) in train.labelled() {
        let hit = q.eval_with(&mut |leaf| matcher.present(leaf, m));
        match (hit, relevant) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    f_score(tp, fp, fn_)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Term(usize),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Not(Box<Node>),
}

impl Node {
    fn size(&self) -> usize {
        match self {
            Node::Term(_) => 1,
            Node::Not(c) => 1 + c.size(),
            Node::And(a, b) | Node::Or(a, b) => 1 + a.size() + b.size(),
        }
    }

    #[cfg(test)]
    fn depth(&self) -> usize {
        match self {
            Node::Term(_) => 1,
            Node::Not(c) => 1 + c.depth(),
            Node::And(a, b) | Node::Or(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn eval(&self, row: u64) -> bool {
        match self {
            Node::Term(i) => row >> i & 1 == 1,
            Node::Not(c) => !c.eval(row),
            Node::And(a, b) => a.eval(row) && b.eval(row),
            Node::Or(a, b) => a.eval(row) || b.eval(row),
        }
    }

    /// Preorder subtree lookup; returns the node and its depth (root = 1).
    fn get(&self, idx: usize) -> (&Node, usize) {
        fn walk<'a>(n: &'a Node, idx: &mut usize, depth: usize) -> Option<(&'a Node, usize)> {
            if *idx == 0 {
                return Some((n, depth));
            }
            *idx -= 1;
            match n {
                Node::Term(_) => None,
                Node::Not(c) => walk(c, idx, depth + 1),
                Node::And(a, b) | Node::Or(a, b) => {
                    walk(a, idx, depth + 1).or_else(|| walk(b, idx, depth + 1))
                }
            }
        }
        let mut i = idx;
        walk(self, &mut i, 1).expect("subtree index in range")
    }

    fn get_mut(&mut self, idx: usize) -> &mut Node {
        fn walk<'a>(n: &'a mut Node, idx: &mut usize) -> Option<&'a mut Node> {
            if *idx == 0 {
                return Some(n);
            }
            *idx -= 1;
            match n {
                Node::Term(_) => None,
                Node::Not(c) => walk(c, idx),
                Node::And(a, b) | Node::Or(a, b) => {
                    let size_a = a.size();
                    if *idx < size_a {
                        walk(a, idx)
                    } else {
                        *idx -= size_a;
                        walk(b, idx)
                    }
                }
            }
        }
        let mut i = idx;
        walk(self, &mut i).expect("subtree index in range")
    }

    fn leftmost_term(&self) -> usize {
        match self {
            Node::Term(i) => *i,
            Node::Not(c) => c.leftmost_term(),
            Node::And(a, _) | Node::Or(a, _) => a.leftmost_term(),
        }
    }

    /// Cuts every branch reaching below `max_depth`, replacing the node at
    /// the limit with its leftmost terminal.
    fn truncate(&mut self, max_depth: usize) {
        if max_depth <= 1 {
            if !matches!(self, Node::Term(_)) {
                *self = Node::Term(self.leftmost_term());
            }
            return;
        }
        match self {
            Node::Term(_) => {}
            Node::Not(c) => c.truncate(max_depth - 1),
            Node::And(a, b) | Node::Or(a, b) => {
                a.truncate(max_depth - 1);
                b.truncate(max_depth - 1);
            }
        }
    }

    fn to_query(&self, terminals: &[Leaf]) -> Query {
        match self {
            Node::Term(i) => Query::Leaf(terminals[*i].clone()),
            Node::Not(c) => Query::negate(c.to_query(terminals)),
            Node::And(..) => {
                let mut items = Vec::new();
                self.flatten(true, terminals, &mut items);
                Query::And(items)
            }
            Node::Or(..) => {
                let mut items = Vec::new();
                self.flatten(false, terminals, &mut items);
                Query::Or(items)
            }
        }
    }

    fn flatten(&self, and: bool, terminals: &[Leaf], out: &mut Vec<Query>) {
        match (self, and) {
            (Node::And(a, b), true) | (Node::Or(a, b), false) => {
                a.flatten(and, terminals, out);
                b.flatten(and, terminals, out);
            }
            _ => out.push(self.to_query(terminals)),
        }
    }
}

/// Distinct presence rows of the training set with their label counts.
struct FitnessCases {
    rows: Vec<(u64, usize, usize)>,
}

impl FitnessCases {
    fn new(terminals: &[Leaf], train: &TrainingSet, matcher: &ExactMatch) -> Self {
        let mut rows: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
        for (m, relevant) in train.labelled() {
            let mut row = 0u64;
            for (i, leaf) in terminals.iter().enumerate() {
                if matcher.present(leaf, m) {
                    row |= 1 << i;
                }
            }
            let e = rows.entry(row).or_default();
            if relevant {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        Self {
            rows: rows.into_iter().map(|(r, (p, n))| (r, p, n)).collect(),
        }
    }

    /// Outputs of `node` on every row, packed as bits.
    fn behavior(&self, node: &Node) -> Vec<u64> {
        let mut bits = vec![0u64; self.rows.len().div_ceil(64)];
        for (i, &(row, _, _)) in self.rows.iter().enumerate() {
            if node.eval(row) {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        bits
    }

    fn fitness(&self, node: &Node) -> f64 {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for &(row, pos, neg) in &self.rows {
            if node.eval(row) {
                tp += pos;
                fp += neg;
            } else {
                fn_ += pos;
            }
        }
        f_score(tp, fp, fn_)
    }
}

struct Scored {
    node: Node,
    fitness: f64,
    size: usize,
    key: String,
}

impl Scored {
    fn new(node: Node, cases: &FitnessCases, terminals: &[Leaf]) -> Self {
        let q = node.to_query(terminals);
        Self {
            fitness: cases.fitness(&node),
            size: q.node_count(),
            key: q.serialize(),
            node,
        }
    }

    /// Better individuals order first.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .fitness
            .total_cmp(&self.fitness)
            .then(self.size.cmp(&other.size))
            .then_with(|| self.key.cmp(&other.key))
    }
}

/// Result of a GP run.
#[derive(Debug, Clone)]
pub struct GpOutcome {
    pub query: Query,
    pub fitness: f64,
    /// Best fitness of each generation, the initial population first.
    pub history: Vec<f64>,
}

const DUPLICATE_RETRIES: usize = 8;

struct Gp<'a> {
    cfg: &'a GpConfig,
    n_terms: usize,
    rng: ChaCha8Rng,
}

impl Gp<'_> {
    fn terminal(&mut self) -> Node {
        Node::Term(self.rng.gen_range(0..self.n_terms))
    }

    fn function(&mut self, depth: usize, full: bool) -> Node {
        let child = |gp: &mut Self| gp.random_tree(depth - 1, full);
        match self.rng.gen_range(0..5) {
            0 | 1 => Node::And(Box::new(child(self)), Box::new(child(self))),
            2 | 3 => Node::Or(Box::new(child(self)), Box::new(child(self))),
            _ => Node::Not(Box::new(child(self))),
        }
    }

    fn random_tree(&mut self, depth: usize, full: bool) -> Node {
        if depth <= 1 {
            return self.terminal();
        }
        if full {
            return self.function(depth, true);
        }
        // grow: pick uniformly among terminals and the three operators
        if self.rng.gen_range(0..self.n_terms + 3) < self.n_terms {
            self.terminal()
        } else {
            self.function(depth, false)
        }
    }

    /// Ramped half-and-half over depths 2..=max_depth.
    fn initial_population(&mut self) -> Vec<Node> {
        let max = self.cfg.max_depth;
        (0..self.cfg.population_size)
            .map(|i| {
                let depth = if max <= 1 { 1 } else { 2 + (i / 2) % (max - 1) };
                self.random_tree(depth, i % 2 == 0)
            })
            .collect()
    }

    fn tournament<'p>(&mut self, pop: &'p [Scored]) -> &'p Scored {
        let mut best: Option<&Scored> = None;
        for _ in 0..self.cfg.tournament_size {
            let c = &pop[self.rng.gen_range(0..pop.len())];
            if best.is_none_or(|b| c.rank(b) == Ordering::Less) {
                best = Some(c);
            }
        }
        best.expect("tournament_size >= 1")
    }

    fn crossover(&mut self, a: &Node, b: &Node) -> (Node, Node) {
        let ia = self.rng.gen_range(0..a.size());
        let ib = self.rng.gen_range(0..b.size());
        let sub_a = a.get(ia).0.clone();
        let sub_b = b.get(ib).0.clone();
        let mut ca = a.clone();
        *ca.get_mut(ia) = sub_b;
        let mut cb = b.clone();
        *cb.get_mut(ib) = sub_a;
        (ca, cb)
    }

    fn mutate(&mut self, n: &mut Node) {
        let idx = self.rng.gen_range(0..n.size());
        let depth_at = n.get(idx).1;
        if self.rng.gen_bool(0.5) {
            let room = self.cfg.max_depth.saturating_sub(depth_at) + 1;
            let sub = self.random_tree(room.min(3), false);
            *n.get_mut(idx) = sub;
        } else {
            let target = n.get_mut(idx);
            *target = match std::mem::replace(target, Node::Term(0)) {
                Node::Term(i) if self.n_terms > 1 => {
                    let mut j = self.rng.gen_range(0..self.n_terms - 1);
                    if j >= i {
                        j += 1;
                    }
                    Node::Term(j)
                }
                Node::Term(i) => Node::Not(Box::new(Node::Term(i))),
                Node::And(a, b) => Node::Or(a, b),
                Node::Or(a, b) => Node::And(a, b),
                Node::Not(c) => *c,
            };
        }
    }
}

/// Learns a query over `terminals` separating the training examples.
pub fn build_rule(
    terminals: &[Leaf],
    train: &TrainingSet,
    cfg: &GpConfig,
    matcher: &ExactMatch,
) -> Result<GpOutcome, BuildError> {
    if terminals.is_empty() {
        return Err(BuildError::EmptyTerminalSet);
    }
    if terminals.len() > 64 {
        return Err(BuildError::TooManyTerminals(terminals.len()));
    }
    if train.positives.is_empty() {
        return Err(BuildError::NoPositives);
    }
    cfg.validate()?;

    let cases = FitnessCases::new(terminals, train, matcher);
    let mut gp = Gp {
        cfg,
        n_terms: terminals.len(),
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
    };
    let score = |n: Node| Scored::new(n, &cases, terminals);

    let mut pop: Vec<Scored> = gp.initial_population().into_iter().map(score).collect();
    let mut history = Vec::with_capacity(cfg.generations + 1);
    let mut best: Option<Scored> = None;

    for generation in 0..=cfg.generations {
        pop.sort_by(Scored::rank);
        history.push(pop[0].fitness);
        if best
            .as_ref()
            .is_none_or(|b| pop[0].rank(b) == Ordering::Less)
        {
            best = Some(Scored {
                node: pop[0].node.clone(),
                fitness: pop[0].fitness,
                size: pop[0].size,
                key: pop[0].key.clone(),
            });
        }
        if generation == cfg.generations {
            break;
        }

        let mut next: Vec<Node> = pop[..cfg.elitism].iter().map(|s| s.node.clone()).collect();
        // smallest tree size seen per behavior
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        for n in &next {
            let e = seen.entry(cases.behavior(n)).or_insert(usize::MAX);
            *e = (*e).min(n.size());
        }
        while next.len() < cfg.population_size {
            let parent = gp.tournament(&pop).node.clone();
            let mut children = if gp.rng.gen_bool(cfg.crossover_rate) {
                let other = gp.tournament(&pop).node.clone();
                let (a, b) = gp.crossover(&parent, &other);
                vec![a, b]
            } else {
                vec![parent]
            };
            for mut child in children.drain(..) {
                if next.len() == cfg.population_size {
                    break;
                }
                if gp.rng.gen_bool(cfg.mutation_rate) {
                    gp.mutate(&mut child);
                }
                child.truncate(cfg.max_depth);
                // A child behaving like an earlier one is kept only if it is
                // smaller; otherwise it is mutated, within a bounded budget.
                let mut behavior = cases.behavior(&child);
                for _ in 0..DUPLICATE_RETRIES {
                    if seen.get(&behavior).is_none_or(|&size| child.size() < size) {
                        break;
                    }
                    gp.mutate(&mut child);
                    child.truncate(cfg.max_depth);
                    behavior = cases.behavior(&child);
                }
                let e = seen.entry(behavior).or_insert(usize::MAX);
                *e = (*e).min(child.size());
                next.push(child);
            }
        }
        // keep offspring order independent of the elite count
        next[cfg.elitism..].shuffle(&mut gp.rng);
        pop = next.into_iter().map(score).collect();
    }

    let best = best.expect("at least one generation evaluated");
    let query = best.node.to_query(terminals);
    debug_assert!(query.depth() <= cfg.max_depth);
    debug_assert!(query
        .leaves()
        .iter()
        .all(|l| terminals.iter().any(|t| t.concept == l.concept)));
    Ok(GpOutcome {
        query,
        fitness: best.fitness,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkgraph::ConceptId;
    use std::collections::BTreeSet;

    fn leaves(n: u32) -> Vec<Leaf> {
        (1..=n)
            .map(|i| Leaf::wiki(ConceptId(i), format!("C{i}"), false))
            .collect()
    }

    fn doc(ids: &[u32]) -> DocumentModel {
        DocumentModel {
            wiki_general: ids.iter().map(|&i| ConceptId(i)).collect::<BTreeSet<_>>(),
            ..Default::default()
        }
    }

    fn plain() -> ExactMatch<'static> {
        static EMPTY: std::sync::OnceLock<Ontology> = std::sync::OnceLock::new();
        ExactMatch::new(EMPTY.get_or_init(Ontology::empty), false)
    }

    #[test]
    fn fitness_cases() {
        let t = leaves(2);
        let train = TrainingSet::new(
            vec![doc(&[1]), doc(&[1]), doc(&[2]), doc(&[2])],
            vec![doc(&[1, 2]), doc(&[])],
        )
        .unwrap();
        let q = Query::Leaf(t[0].clone());
        // tp 2, fp 1, fn 2
        assert!((fitness(&q, &train, &plain()) - 4.0 / 7.0).abs() < 1e-12);
        let all = Query::Or(vec![
            Query::Leaf(t[0].clone()),
            Query::negate(Query::Leaf(t[0].clone())),
        ]);
        assert!(fitness(&all, &train, &plain()) > 0.0);
        let none = Query::And(vec![
            Query::Leaf(t[0].clone()),
            Query::negate(Query::Leaf(t[0].clone())),
        ]);
        assert_eq!(fitness(&none, &train, &plain()), 0.0);
    }

    #[test]
    fn node_indexing_and_truncation() {
        let n = Node::And(
            Box::new(Node::Term(0)),
            Box::new(Node::Or(
                Box::new(Node::Term(1)),
                Box::new(Node::Not(Box::new(Node::Term(2)))),
            )),
        );
        assert_eq!(n.size(), 6);
        assert_eq!(n.depth(), 4);
        assert_eq!(n.get(0).1, 1);
        assert!(matches!(n.get(2), (Node::Or(..), 2)));
        assert_eq!(n.get(3), (&Node::Term(1), 3));
        assert_eq!(n.get(5), (&Node::Term(2), 4));
        let mut m = n.clone();
        *m.get_mut(3) = Node::Term(7);
        assert_eq!(m.get(3).0, &Node::Term(7));
        let mut t = n.clone();
        t.truncate(2);
        assert_eq!(
            t,
            Node::And(Box::new(Node::Term(0)), Box::new(Node::Term(1)))
        );
    }

    #[test]
    fn flattening_to_query() {
        let t = leaves(3);
        let n = Node::And(
            Box::new(Node::And(Box::new(Node::Term(0)), Box::new(Node::Term(1)))),
            Box::new(Node::Term(2)),
        );
        assert_eq!(n.to_query(&t).serialize(), r#""C1" AND "C2" AND "C3""#);
    }

    #[test]
    fn single_terminal_recovers_leaf() {
        let t = leaves(1);
        let train = TrainingSet::new(vec![doc(&[1]); 5], vec![doc(&[]); 5]).unwrap();
        let out = build_rule(&t, &train, &GpConfig::with_seed(7), &plain()).unwrap();
        assert_eq!(out.fitness, 1.0);
        assert_eq!(out.query, Query::Leaf(t[0].clone()));
    }

    #[test]
    fn zero_generations() {
        let t = leaves(2);
        let train = TrainingSet::new(vec![doc(&[1])], vec![doc(&[2])]).unwrap();
        let cfg = GpConfig {
            generations: 0,
            ..GpConfig::with_seed(3)
        };
        let out = build_rule(&t, &train, &cfg, &plain()).unwrap();
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn errors() {
        let train = TrainingSet::new(vec![doc(&[1])], vec![]).unwrap();
        assert_eq!(
            build_rule(&[], &train, &GpConfig::with_seed(1), &plain()).unwrap_err(),
            BuildError::EmptyTerminalSet
        );
        assert_eq!(
            TrainingSet::new(vec![], vec![doc(&[])]).unwrap_err(),
            BuildError::NoPositives
        );
        let cfg = GpConfig {
            crossover_rate: 1.5,
            ..GpConfig::with_seed(1)
        };
        assert!(matches!(
            build_rule(&leaves(1), &train, &cfg, &plain()),
            Err(BuildError::Config(_))
        ));
    }
}
