//! Leakage-isolated train/test splitting of seal titles.
//!
//! Titles whose similarity (`1 - NED`) reaches the threshold are joined by an
//! edge; connected components of that graph are the communities and are
//! never split across train and test. A keyword fine filter then moves any
//! test community sharing a head word with the train side over to train.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::SplitError;
use crate::text::levenshtein_seq;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub nodes: Vec<String>,
    /// `(i, j, similarity)` with `i < j`, indices into `nodes`.
    pub edges: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

fn check_threshold(threshold: f64) -> Result<(), SplitError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(SplitError::InvalidParameter(format!("threshold {threshold} is outside (0, 1]")))
    }
}

/// `1 - NED` over pre-split character vectors.
fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 1.0;
    }
    1.0 - levenshtein_seq(a, b) as f64 / denom as f64
}

pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    similarity_chars(&a, &b)
}

/// Similarity if it can reach `threshold`. The length difference alone
/// bounds NED from below, which skips most pairs cheaply.
fn similar_enough(a: &[char], b: &[char], threshold: f64) -> Option<f64> {
    let denom = a.len().max(b.len());
    if denom > 0 {
        let lower_ned = a.len().abs_diff(b.len()) as f64 / denom as f64;
        if 1.0 - lower_ned < threshold {
            return None;
        }
    }
    let s = similarity_chars(a, b);
    (s >= threshold).then_some(s)
}

/// Thresholded similarity graph over all title pairs. Nodes follow the map's
/// key order.
pub fn build_similarity_graph(titles: &BTreeMap<String, String>, threshold: f64) -> Result<SimilarityGraph, SplitError> {
    check_threshold(threshold)?;
    let nodes: Vec<String> = titles.keys().cloned().collect();
    let chars: Vec<Vec<char>> = titles.values().map(|t| t.chars().collect()).collect();
    let edges = (0..chars.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let chars = &chars;
            (i + 1..chars.len())
                .filter_map(move |j| similar_enough(&chars[i], &chars[j], threshold).map(|s| (i, j, s)))
        })
        .collect();
    Ok(SimilarityGraph { nodes, edges, threshold })
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components. Members keep node order; communities are ordered by
/// their first member.
pub fn detect_communities(graph: &SimilarityGraph) -> Vec<Vec<String>> {
    let n = graph.nodes.len();
    let mut dsu = DisjointSet::new(n);
    for &(i, j, _) in &graph.edges {
        dsu.union(i, j);
    }
    let mut by_root: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut first_seen: Vec<usize> = Vec::new();
    for i in 0..n {
        let root = dsu.find(i);
        let members = by_root.entry(root).or_default();
        if members.is_empty() {
            first_seen.push(root);
        }
        members.push(graph.nodes[i].clone());
    }
    first_seen.into_iter().map(|r| by_root.remove(&r).unwrap_or_default()).collect()
}

/// Suffix and stop-word lists for keyword extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordLexicon {
    version: String,
    /// Longest first.
    suffixes: Vec<String>,
    stop: BTreeSet<String>,
}

const DEFAULT_LEXICON: &str = include_str!("../data/seal_lexicon.tsv");

impl KeywordLexicon {
    pub fn parse(text: &str) -> Result<Self, SplitError> {
        let mut version = String::from("unversioned");
        let mut suffixes = Vec::new();
        let mut stop = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let err = |message: &str| SplitError::Lexicon { line: n + 1, message: message.to_string() };
            let (kind, entry) = line.split_once('\t').ok_or_else(|| err("expected `suffix|stop<TAB>entry`"))?;
            let entry = normalize_title(entry);
            if entry.is_empty() {
                return Err(err("empty entry"));
            }
            match kind {
                "suffix" => suffixes.push(entry),
                "stop" => {
                    stop.insert(entry);
                }
                _ => return Err(err("entry kind must be `suffix` or `stop`")),
            }
        }
        suffixes.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
        suffixes.dedup();
        Ok(KeywordLexicon { version, suffixes, stop })
    }

    pub fn from_path(path: &Path) -> Result<Self, SplitError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SplitError::Lexicon { line: 0, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn builtin() -> Arc<KeywordLexicon> {
        static LEXICON: OnceLock<Arc<KeywordLexicon>> = OnceLock::new();
        LEXICON
            .get_or_init(|| Arc::new(KeywordLexicon::parse(DEFAULT_LEXICON).expect("builtin lexicon parses")))
            .clone()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    fn keep(&self, head: &str) -> bool {
        let n = head.chars().count();
        let min = if head.is_ascii() { 3 } else { 2 };
        n >= min && !self.stop.contains(head) && !self.suffixes.iter().any(|s| s == head)
    }

    /// Head words of a title.
    pub fn keywords(&self, title: &str) -> BTreeSet<String> {
        let title = normalize_title(title);
        let mut out = BTreeSet::new();
        for segment in title.split(|c: char| !c.is_alphanumeric()).filter(|s| !s.is_empty()) {
            if segment.is_ascii() {
                if self.keep(segment) && !self.suffixes.iter().any(|s| s == segment) {
                    out.insert(segment.to_string());
                }
                continue;
            }
            let mut head = String::new();
            let mut rest = segment;
            while let Some(c) = rest.chars().next() {
                if let Some(suffix) = self.suffixes.iter().find(|s| rest.starts_with(s.as_str())) {
                    if self.keep(&head) {
                        out.insert(std::mem::take(&mut head));
                    }
                    head.clear();
                    rest = &rest[suffix.len()..];
                } else {
                    head.push(c);
                    rest = &rest[c.len_utf8()..];
                }
            }
            if self.keep(&head) {
                out.insert(head);
            }
        }
        out
    }
}

fn normalize_title(s: &str) -> String {
    s.nfc().collect::<String>().trim().to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub assignment: SplitAssignment,
    /// Test size the greedy pass aimed for.
    pub target_test: usize,
    /// Test ended below target: no community fit the remainder, or the fine
    /// filter moved communities back to train.
    pub undersized: bool,
    /// Communities moved from test to train by the keyword filter.
    pub keyword_moves: usize,
}

/// Assigns whole communities to test, largest first among those that still
/// fit the remaining target (ties in seeded random order), then applies the
/// keyword fine filter until no test community shares a keyword with train.
pub fn assign_split(
    communities: &[Vec<String>],
    titles: &BTreeMap<String, String>,
    lexicon: &KeywordLexicon,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitOutcome, SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::InvalidParameter(format!("test fraction {test_fraction} is outside (0, 1)")));
    }
    let total: usize = communities.iter().map(Vec::len).sum();
    let target = ((test_fraction * total as f64) - 1e-9).ceil().max(1.0) as usize;

    let mut order: Vec<usize> = (0..communities.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|&a, &b| communities[b].len().cmp(&communities[a].len()));

    let mut in_test = vec![false; communities.len()];
    let mut remaining = target;
    for &c in &order {
        if remaining == 0 {
            break;
        }
        let size = communities[c].len();
        if size > 0 && size <= remaining {
            in_test[c] = true;
            remaining -= size;
        }
    }

    let keywords: Vec<BTreeSet<String>> = communities
        .iter()
        .map(|members| {
            members
                .iter()
                .filter_map(|id| titles.get(id))
                .flat_map(|t| lexicon.keywords(t))
                .collect()
        })
        .collect();

    let mut keyword_moves = 0;
    loop {
        let train_keywords: BTreeSet<&String> =
            (0..communities.len()).filter(|&c| !in_test[c]).flat_map(|c| keywords[c].iter()).collect();
        let leaking: Vec<usize> = (0..communities.len())
            .filter(|&c| in_test[c] && keywords[c].iter().any(|k| train_keywords.contains(k)))
            .collect();
        if leaking.is_empty() {
            break;
        }
        for c in leaking {
            in_test[c] = false;
            keyword_moves += 1;
        }
    }

    let mut assignment = SplitAssignment::default();
    for (c, members) in communities.iter().enumerate() {
        let side = if in_test[c] { &mut assignment.test } else { &mut assignment.train };
        side.extend(members.iter().cloned());
    }
    if assignment.test.is_empty() {
        return Err(SplitError::InfeasibleSplit(format!(
            "no community could be placed in test (target {target} of {total}, {keyword_moves} moved by keyword filter)"
        )));
    }
    let undersized = assignment.test.len() < target;
    Ok(SplitOutcome { assignment, target_test: target, undersized, keyword_moves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEdgeCheck {
    pub pairs_scanned: u64,
    pub cross_pairs: u64,
    pub passed: bool,
}

/// Rescans every train x test pair from the raw titles.
pub fn cross_edge_check(
    assignment: &SplitAssignment,
    titles: &BTreeMap<String, String>,
    threshold: f64,
) -> CrossEdgeCheck {
    let chars = |ids: &BTreeSet<String>| -> Vec<Vec<char>> {
        ids.iter().filter_map(|id| titles.get(id)).map(|t| t.chars().collect()).collect()
    };
    let train = chars(&assignment.train);
    let test = chars(&assignment.test);
    let cross_pairs = test
        .par_iter()
        .map(|t| train.iter().filter(|r| similarity_chars(t, r) >= threshold).count() as u64)
        .sum::<u64>();
    CrossEdgeCheck {
        pairs_scanned: train.len() as u64 * test.len() as u64,
        cross_pairs,
        passed: cross_pairs == 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub threshold: f64,
    pub seed: u64,
    pub test_fraction: f64,
    pub lexicon_version: String,
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub target_test: usize,
    pub undersized: bool,
    pub keyword_moves: usize,
    pub communities: usize,
    /// community size -> number of communities of that size
    pub community_size_histogram: BTreeMap<usize, usize>,
    pub cross_edge_check: CrossEdgeCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub threshold: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams { threshold: DEFAULT_THRESHOLD, test_fraction: 0.1, seed: 42 }
    }
}

/// Graph, communities, assignment and post-hoc check in one call.
pub fn split_titles(
    titles: &BTreeMap<String, String>,
    lexicon: &KeywordLexicon,
    params: &SplitParams,
    config: serde_json::Value,
) -> Result<(SplitAssignment, SplitReport), SplitError> {
    let graph = build_similarity_graph(titles, params.threshold)?;
    let communities = detect_communities(&graph);
    let outcome = assign_split(&communities, titles, lexicon, params.test_fraction, params.seed)?;
    let check = cross_edge_check(&outcome.assignment, titles, params.threshold);
    let mut hist = BTreeMap::new();
    for c in &communities {
        *hist.entry(c.len()).or_insert(0) += 1;
    }
    let report = SplitReport {
        toolkit_version: crate::VERSION.to_string(),
        config,
        threshold: params.threshold,
        seed: params.seed,
        test_fraction: params.test_fraction,
        lexicon_version: lexicon.version().to_string(),
        total: titles.len(),
        train: outcome.assignment.train.len(),
        test: outcome.assignment.test.len(),
        target_test: outcome.target_test,
        undersized: outcome.undersized,
        keyword_moves: outcome.keyword_moves,
        communities: communities.len(),
        community_size_histogram: hist,
        cross_edge_check: check,
    };
    Ok((outcome.assignment, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn titles(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn empty_lexicon() -> KeywordLexicon {
        KeywordLexicon::parse("").unwrap()
    }

    #[test]
    fn identical_titles_connect() {
        let g = build_similarity_graph(&titles(&[("a", "永安镇"), ("b", "永安镇")]), 0.7).unwrap();
        assert_eq!(g.edges, vec![(0, 1, 1.0)]);
    }

    #[test]
    fn disjoint_titles_are_edgeless() {
        let g = build_similarity_graph(&titles(&[("a", "abc"), ("b", "xyz"), ("c", "pqr")]), 0.7).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(detect_communities(&g).len(), 3);
    }

    #[test]
    fn triple_with_two_edges() {
        let t = titles(&[("a", "abcdefghij"), ("b", "abcdefghiX"), ("c", "abcdefghYZ")]);
        let g = build_similarity_graph(&t, 0.85).unwrap();
        assert_eq!(g.edges, vec![(0, 1, 0.9)]);
        let g = build_similarity_graph(&t, 0.8).unwrap();
        assert_eq!(g.edges.len(), 3);

        // edge weights given directly: 0.9, 0.8 above threshold, 0.2 below
        let g = SimilarityGraph {
            nodes: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![(0, 1, 0.9), (0, 2, 0.8)],
            threshold: 0.7,
        };
        assert_eq!(detect_communities(&g).len(), 1);
    }

    #[test]
    fn path_is_one_community() {
        let g = SimilarityGraph {
            nodes: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![(0, 1, 0.9), (1, 2, 0.9)],
            threshold: 0.7,
        };
        assert_eq!(detect_communities(&g), vec![vec!["a".to_string(), "b".into(), "c".into()]]);
    }

    #[test]
    fn threshold_bounds() {
        let t = titles(&[("a", "x")]);
        assert!(build_similarity_graph(&t, 0.0).is_err());
        assert!(build_similarity_graph(&t, 1.01).is_err());
        assert!(build_similarity_graph(&t, 1.0).is_ok());
    }

    #[test]
    fn singletons_hit_target_exactly() {
        let t: BTreeMap<String, String> = (0..100).map(|i| (format!("{i:03}"), format!("t{i}"))).collect();
        let comms: Vec<Vec<String>> = t.keys().map(|k| vec![k.clone()]).collect();
        let out = assign_split(&comms, &t, &empty_lexicon(), 0.1, 7).unwrap();
        assert_eq!(out.assignment.test.len(), 10);
        assert_eq!(out.assignment.train.len(), 90);
        assert!(!out.undersized);
        let again = assign_split(&comms, &t, &empty_lexicon(), 0.1, 7).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn giant_community_leaves_small_test() {
        let t: BTreeMap<String, String> = (0..100).map(|i| (format!("{i:03}"), format!("t{i}"))).collect();
        let ids: Vec<String> = t.keys().cloned().collect();
        let mut comms = vec![ids[..95].to_vec()];
        comms.extend(ids[95..].iter().map(|k| vec![k.clone()]));
        let out = assign_split(&comms, &t, &empty_lexicon(), 0.1, 1).unwrap();
        assert_eq!(out.assignment.test.len(), 5);
        assert!(out.undersized);
        assert!(out.assignment.test.iter().all(|id| ids[95..].contains(id)));
    }

    #[test]
    fn keyword_filter_can_make_split_infeasible() {
        let t = titles(&[("a", "永安镇"), ("b", "永安村")]);
        let comms = vec![vec!["a".to_string()], vec!["b".to_string()]];
        let lex = KeywordLexicon::builtin();
        let err = assign_split(&comms, &t, &lex, 0.5, 0).unwrap_err();
        assert!(matches!(err, SplitError::InfeasibleSplit(_)));
    }

    #[test]
    fn keywords_from_titles() {
        let lex = KeywordLexicon::builtin();
        let kw = lex.keywords("北川羌族自治县永安镇工农村 第九村民小组");
        let expect: BTreeSet<String> = ["北川羌族", "永安", "工农"].iter().map(|s| s.to_string()).collect();
        assert_eq!(kw, expect);
        let kw = lex.keywords("北川羌族自治县农村信用合作联社永安分社");
        assert!(kw.contains("北川羌族") && kw.contains("永安"));
        let kw = lex.keywords("Acme Trading Co., Ltd.");
        assert_eq!(kw, ["acme", "trading"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn fraction_bounds() {
        let t = titles(&[("a", "x")]);
        let comms = vec![vec!["a".to_string()]];
        assert!(assign_split(&comms, &t, &empty_lexicon(), 0.0, 0).is_err());
        assert!(assign_split(&comms, &t, &empty_lexicon(), 1.0, 0).is_err());
    }
}
