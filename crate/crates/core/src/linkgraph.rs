//! The Wikipedia instantiation: articles, redirects, anchor statistics and
//! inlink sets, loaded from four TSV files and immutable afterwards.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::text;

/// Identifier of a Wikipedia article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub u32);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("{file}:{line}: malformed line: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: dangling reference to article id {id}")]
    Dangling { file: String, line: usize, id: u32 },
    #[error("duplicate article title {0:?}")]
    DuplicateTitle(String),
    #[error("duplicate article id {0}")]
    DuplicateId(u32),
    #[error("empty graph")]
    Empty,
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One candidate meaning of a surface term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sense {
    pub concept: ConceptId,
    /// Share of the surface's (anchor) occurrences that point to `concept`.
    pub commonness: f64,
}

#[derive(Debug, Clone, Default)]
struct AnchorStats {
    targets: BTreeMap<ConceptId, u64>,
    /// Plain-text (unlinked) occurrences, when the anchors file carries them.
    occurrences: Option<u64>,
}

impl AnchorStats {
    fn total(&self) -> u64 {
        self.targets.values().sum()
    }
}

pub const DEFAULT_MAX_NGRAM: usize = 5;

#[derive(Debug, Clone)]
pub struct LinkGraph {
    titles: BTreeMap<ConceptId, String>,
    articles: HashMap<String, ConceptId>,
    redirects: HashMap<String, ConceptId>,
    /// Keyed by lowercased surface.
    anchors: HashMap<String, AnchorStats>,
    /// Sorted, deduplicated.
    inlinks: HashMap<ConceptId, Vec<ConceptId>>,
}

/// Incremental construction of a [`LinkGraph`]; used by the TSV loader and by
/// tests that generate graphs in memory.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    titles: BTreeMap<ConceptId, String>,
    articles: HashMap<String, ConceptId>,
    redirects: HashMap<String, ConceptId>,
    anchors: HashMap<String, AnchorStats>,
    links: Vec<(ConceptId, ConceptId)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn article(&mut self, id: u32, title: &str) -> Result<&mut Self, GraphError> {
        let id = ConceptId(id);
        if self.titles.contains_key(&id) {
            return Err(GraphError::DuplicateId(id.0));
        }
        if self.articles.insert(title.to_string(), id).is_some() {
            return Err(GraphError::DuplicateTitle(title.to_string()));
        }
        self.titles.insert(id, title.to_string());
        Ok(self)
    }

    pub fn redirect(&mut self, surface: &str, target: u32) -> &mut Self {
        self.redirects
            .insert(surface.to_string(), ConceptId(target));
        self
    }

    /// Records `count` anchor uses of `surface` pointing at `target`.
    /// `occurrences` is the plain-text occurrence count of the surface, if known.
    pub fn anchor(
        &mut self,
        surface: &str,
        target: u32,
        count: u64,
        occurrences: Option<u64>,
    ) -> &mut Self {
        let stats = self.anchors.entry(surface.to_lowercase()).or_default();
        *stats.targets.entry(ConceptId(target)).or_insert(0) += count;
        if let Some(occ) = occurrences {
            stats.occurrences = Some(stats.occurrences.map_or(occ, |o| o.max(occ)));
        }
        self
    }

    pub fn link(&mut self, source: u32, target: u32) -> &mut Self {
        self.links.push((ConceptId(source), ConceptId(target)));
        self
    }

    pub fn build(self) -> Result<LinkGraph, GraphError> {
        self.build_checked(&Provenance::default())
    }

    fn build_checked(self, prov: &Provenance) -> Result<LinkGraph, GraphError> {
        if self.titles.is_empty() {
            return Err(GraphError::Empty);
        }
        let check = |id: ConceptId, file: &str, line: usize| {
            if self.titles.contains_key(&id) {
                Ok(())
            } else {
                Err(GraphError::Dangling {
                    file: file.to_string(),
                    line,
                    id: id.0,
                })
            }
        };
        for (surface, &id) in &self.redirects {
            check(id, "redirects.tsv", prov.line("redirects", surface))?;
        }
        for (surface, stats) in &self.anchors {
            for &id in stats.targets.keys() {
                check(id, "anchors.tsv", prov.line("anchors", surface))?;
            }
        }
        for (i, &(src, dst)) in self.links.iter().enumerate() {
            let line = prov.link_lines.get(i).copied().unwrap_or(i + 1);
            check(src, "links.tsv", line)?;
            check(dst, "links.tsv", line)?;
        }

        let mut inlinks: HashMap<ConceptId, Vec<ConceptId>> = HashMap::new();
        for &(src, dst) in &self.links {
            inlinks.entry(dst).or_default().push(src);
        }
        for v in inlinks.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Ok(LinkGraph {
            titles: self.titles,
            articles: self.articles,
            redirects: self.redirects,
            anchors: self.anchors,
            inlinks,
        })
    }
}

/// Line numbers for error messages when building from files.
#[derive(Debug, Default)]
struct Provenance {
    lines: HashMap<(&'static str, String), usize>,
    link_lines: Vec<usize>,
}

impl Provenance {
    fn line(&self, file: &'static str, key: &str) -> usize {
        self.lines
            .get(&(file, key.to_string()))
            .copied()
            .unwrap_or(0)
    }
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn rows<'a>(
    file: &'a str,
    content: &'a str,
    arity: Range<usize>,
) -> impl Iterator<Item = Result<(usize, Vec<&'a str>), GraphError>> + 'a {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            let fields: Vec<&str> = l.trim_end_matches('\r').split('\t').collect();
            if arity.contains(&fields.len()) {
                Ok((i + 1, fields))
            } else {
                Err(GraphError::Malformed {
                    file: file.to_string(),
                    line: i + 1,
                    reason: format!("expected {} fields, found {}", arity.start, fields.len()),
                })
            }
        })
}

fn parse_num<T: std::str::FromStr>(file: &str, line: usize, s: &str) -> Result<T, GraphError> {
    s.trim().parse().map_err(|_| GraphError::Malformed {
        file: file.to_string(),
        line,
        reason: format!("not a non-negative integer: {s:?}"),
    })
}

/// Loads the four TSV files of a graph.
pub fn load_graph(
    pages: &Path,
    redirects: &Path,
    anchors: &Path,
    links: &Path,
) -> Result<LinkGraph, GraphError> {
    let mut b = GraphBuilder::new();
    let mut prov = Provenance::default();

    let content = read(pages)?;
    for row in rows("pages.tsv", &content, 2..3) {
        let (line, f) = row?;
        let id = parse_num("pages.tsv", line, f[0])?;
        if f[1].is_empty() {
            return Err(GraphError::Malformed {
                file: "pages.tsv".into(),
                line,
                reason: "empty title".into(),
            });
        }
        b.article(id, f[1])?;
    }

    let content = read(redirects)?;
    for row in rows("redirects.tsv", &content, 2..3) {
        let (line, f) = row?;
        let id = parse_num("redirects.tsv", line, f[1])?;
        prov.lines.insert(("redirects", f[0].to_string()), line);
        b.redirect(f[0], id);
    }

    let content = read(anchors)?;
    for row in rows("anchors.tsv", &content, 3..5) {
        let (line, f) = row?;
        let id = parse_num("anchors.tsv", line, f[1])?;
        let count: u64 = parse_num("anchors.tsv", line, f[2])?;
        if count == 0 {
            return Err(GraphError::Malformed {
                file: "anchors.tsv".into(),
                line,
                reason: "anchor count must be at least 1".into(),
            });
        }
        let occurrences = match f.get(3) {
            Some(s) => Some(parse_num("anchors.tsv", line, s)?),
            None => None,
        };
        prov.lines
            .entry(("anchors", f[0].to_lowercase()))
            .or_insert(line);
        b.anchor(f[0], id, count, occurrences);
    }

    let content = read(links)?;
    for row in rows("links.tsv", &content, 2..3) {
        let (line, f) = row?;
        let src = parse_num("links.tsv", line, f[0])?;
        let dst = parse_num("links.tsv", line, f[1])?;
        prov.link_lines.push(line);
        b.link(src, dst);
    }

    b.build_checked(&prov)
}

/// Loads `pages.tsv`, `redirects.tsv`, `anchors.tsv` and `links.tsv` from `dir`.
pub fn load_graph_dir(dir: &Path) -> Result<LinkGraph, GraphError> {
    load_graph(
        &dir.join("pages.tsv"),
        &dir.join("redirects.tsv"),
        &dir.join("anchors.tsv"),
        &dir.join("links.tsv"),
    )
}

impl LinkGraph {
    /// |W|: number of articles (redirects are not counted).
    pub fn total_articles(&self) -> usize {
        self.titles.len()
    }

    pub fn contains(&self, w: ConceptId) -> bool {
        self.titles.contains_key(&w)
    }

    pub fn title(&self, w: ConceptId) -> Option<&str> {
        self.titles.get(&w).map(String::as_str)
    }

    pub fn article(&self, title: &str) -> Option<ConceptId> {
        self.articles.get(title).copied()
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.titles.keys().copied()
    }

    /// Articles linking to `w`, sorted ascending.
    pub fn inlinks(&self, w: ConceptId) -> Result<&[ConceptId], GraphError> {
        if !self.contains(w) {
            return Err(GraphError::UnknownConcept(w));
        }
        Ok(self.inlinks.get(&w).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// Every article for which `s` is a title, redirect or anchor surface.
    ///
    /// Commonness comes from anchor counts; a title or redirect target that
    /// never appears as an anchor target of `s` contributes a count of one.
    /// Results are ordered by concept id.
    pub fn senses(&self, s: &str) -> Vec<Sense> {
        let mut counts: BTreeMap<ConceptId, u64> = BTreeMap::new();
        if let Some(stats) = self.anchors.get(&s.to_lowercase()) {
            counts.extend(stats.targets.iter().map(|(&k, &v)| (k, v)));
        }
        for id in [self.articles.get(s), self.redirects.get(s)]
            .into_iter()
            .flatten()
        {
            counts.entry(*id).or_insert(1);
        }
        let total: u64 = counts.values().sum();
        counts
            .into_iter()
            .map(|(concept, c)| Sense {
                concept,
                commonness: c as f64 / total as f64,
            })
            .collect()
    }

    /// Just the concept ids of [`senses`](Self::senses).
    pub fn sense_ids(&self, s: &str) -> Vec<ConceptId> {
        self.senses(s).into_iter().map(|s| s.concept).collect()
    }

    fn is_surface(&self, key: &str) -> bool {
        self.articles.contains_key(key)
            || self.redirects.contains_key(key)
            || self.anchors.contains_key(&key.to_lowercase())
    }

    /// Total anchor uses of `surface` (case-insensitive).
    pub fn anchor_count(&self, surface: &str) -> u64 {
        self.anchors
            .get(&surface.to_lowercase())
            .map_or(0, AnchorStats::total)
    }

    /// Plain-text occurrence count of `surface`, when recorded.
    pub fn plain_occurrences(&self, surface: &str) -> Option<u64> {
        self.anchors
            .get(&surface.to_lowercase())
            .and_then(|s| s.occurrences)
    }

    /// Non-overlapping, leftmost-longest n-grams of `text` whose surface is a
    /// known title, redirect or anchor. Returns byte spans with the matched
    /// surface exactly as it appears in `text`.
    pub fn anchor_candidates(&self, text: &str, max_ngram: usize) -> Vec<(Range<usize>, String)> {
        let tokens = text::tokenize(text);
        text::scan_longest(text, &tokens, max_ngram.max(1), |key| {
            self.is_surface(key).then_some(())
        })
        .into_iter()
        .map(|m| (m.span.clone(), text[m.span].to_string()))
        .collect()
    }

    /// Every surface key the graph recognizes with at least one sense, as a
    /// set; used for vocabulary construction.
    pub fn surfaces(&self) -> BTreeSet<String> {
        self.articles
            .keys()
            .chain(self.redirects.keys())
            .chain(self.anchors.keys())
            .cloned()
            .collect()
    }
}
