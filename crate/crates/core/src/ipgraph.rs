//! Inner-product proximity graphs and the two selection methods built on
//! them: largest in-degree and per-user top-1 vote counting.
//!
//! The exact graph links every item to its top-K largest-inner-product items
//! by an O(N^2) scan. The approximate graph is a single-layer NSW built by
//! incremental insertion with inner product as the similarity: each new node
//! beam-searches its top-K neighbors among the already-inserted nodes, links
//! to them, and offers reverse edges back, each node keeping at most `2k`
//! outgoing edges by evicting its weakest edge on overflow. A single layer
//! keeps in-degree counting unambiguous.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::domain::{
    better_of, cmp_score_desc, inner_product, norm, rank_desc, EmbeddingMatrix, Method,
    SelectionResult,
};
use crate::error::{Error, Result};

/// Whether a graph's out-edges are the exact top-K sets or an NSW
/// approximation (which also carries accepted reverse edges).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    Exact,
    Approximate,
}

impl GraphMode {
    pub fn tag(&self) -> &'static str {
        match self {
            GraphMode::Exact => "exact",
            GraphMode::Approximate => "approx",
        }
    }
}

impl std::str::FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GraphMode::Exact),
            "approx" | "approximate" => Ok(GraphMode::Approximate),
            other => Err(Error::invalid(format!("unknown graph mode {other:?}"))),
        }
    }
}

/// Directed out-K adjacency over item indices.
///
/// Exact mode has out-degree exactly `k` everywhere; approximate mode allows
/// up to `2k` out-edges per node (forward links plus accepted reverse links).
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    n: usize,
    k: usize,
    mode: GraphMode,
    entry_point: usize,
    adjacency: Vec<Vec<usize>>,
}

impl ProximityGraph {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("graph must be non-empty"));
        }
        if self.adjacency.len() != self.n {
            return Err(Error::invalid("adjacency row count mismatch"));
        }
        if self.entry_point >= self.n {
            return Err(Error::invalid(format!(
                "entry point {} out of range (n = {})",
                self.entry_point, self.n
            )));
        }
        let budget = self.degree_budget();
        for (i, row) in self.adjacency.iter().enumerate() {
            if row.len() > budget {
                return Err(Error::invalid(format!(
                    "node {i} out-degree {} exceeds budget {budget}",
                    row.len()
                )));
            }
            if self.mode == GraphMode::Exact && row.len() != self.k {
                return Err(Error::invalid(format!(
                    "exact graph node {i} has out-degree {}, expected exactly {}",
                    row.len(),
                    self.k
                )));
            }
            if row.iter().any(|&j| j == i) {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
            if row.iter().any(|&j| j >= self.n) {
                return Err(Error::invalid(format!("edge target out of range at node {i}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn entry_point(&self) -> usize {
        self.entry_point
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Maximum allowed out-degree: `k` exact, `2k` approximate.
    pub fn degree_budget(&self) -> usize {
        match self.mode {
            GraphMode::Exact => self.k,
            GraphMode::Approximate => 2 * self.k,
        }
    }

    /// In-degree of every node, counted over the full adjacency.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for row in &self.adjacency {
            for &j in row {
                deg[j] += 1;
            }
        }
        deg
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }
}

/// Beam-search tuning knobs: beam width and how many neighbors to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub ef: usize,
    pub k_out: usize,
}

impl SearchParams {
    pub fn new(ef: usize, k_out: usize) -> Result<Self> {
        if k_out == 0 || ef < k_out {
            return Err(Error::invalid(format!(
                "search params require ef >= k_out >= 1 (got ef = {ef}, k_out = {k_out})"
            )));
        }
        Ok(Self { ef, k_out })
    }
}

fn check_k(k: usize, items: &EmbeddingMatrix) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid("item set is empty"));
    }
    if k == 0 || k >= items.count() {
        return Err(Error::invalid(format!(
            "graph degree k = {k} out of range 1..{}",
            items.count()
        )));
    }
    Ok(())
}

/// Index of the largest-norm item (ascending-index tie-break); large-norm
/// items dominate inner-product results, making them good search entries.
fn max_norm_entry(items: &EmbeddingMatrix) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, x) in items.vectors().enumerate() {
        best = better_of(best, (norm(x), i));
    }
    best.1
}

/// Exact inner-product proximity graph: for every item `i`, out-edges to the
/// `k` items with the largest `x_i . x_j`, `j != i`. O(N^2 D).
pub fn build_exact_ip_graph(items: &EmbeddingMatrix, k: usize) -> Result<ProximityGraph> {
    check_k(k, items)?;
    let n = items.count();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = items.vector(i);
            let mut scored: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (inner_product(xi, items.vector(j)), j))
                .collect();
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, |a, b| cmp_score_desc(*a, *b));
                scored.truncate(k);
            }
            scored.sort_by(|a, b| cmp_score_desc(*a, *b));
            scored.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let graph = ProximityGraph {
        n,
        k,
        mode: GraphMode::Exact,
        entry_point: max_norm_entry(items),
        adjacency,
    };
    graph.validate()?;
    Ok(graph)
}

/// Max-heap entry ordered by value descending, index ascending on ties.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    value: f64,
    idx: usize,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .partial_cmp(&other.value)
            .unwrap_or(Ordering::Equal)
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first beam search by inner product over an adjacency prefix.
/// Returns all beam survivors sorted by value descending, index ascending.
fn beam_search(
    items: &EmbeddingMatrix,
    adjacency: &[Vec<usize>],
    entry: usize,
    q: &[f64],
    ef: usize,
    visited: &mut [u32],
    stamp: u32,
) -> Vec<(f64, usize)> {
    let ef = ef.max(1);
    let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
    // Results are kept as a min-heap so the weakest survivor is on top.
    let mut results: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();

    let start = Scored {
        value: inner_product(q, items.vector(entry)),
        idx: entry,
    };
    visited[entry] = stamp;
    candidates.push(start);
    results.push(std::cmp::Reverse(start));

    while let Some(current) = candidates.pop() {
        let worst = results.peek().expect("results never empty").0;
        if results.len() >= ef && current < worst {
            break;
        }
        for &nb in &adjacency[current.idx] {
            if visited[nb] == stamp {
                continue;
            }
            visited[nb] = stamp;
            let cand = Scored {
                value: inner_product(q, items.vector(nb)),
                idx: nb,
            };
            if results.len() < ef {
                candidates.push(cand);
                results.push(std::cmp::Reverse(cand));
            } else if cand > results.peek().unwrap().0 {
                candidates.push(cand);
                results.push(std::cmp::Reverse(cand));
                results.pop();
            }
        }
    }

    let mut out: Vec<(f64, usize)> = results
        .into_iter()
        .map(|std::cmp::Reverse(s)| (s.value, s.idx))
        .collect();
    out.sort_by(|a, b| cmp_score_desc(*a, *b));
    out
}

/// Insertion order for approximate construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOrder {
    /// Input order; the default, for reproducibility.
    Input,
    /// Seeded Fisher-Yates shuffle of the insertion sequence.
    Shuffled { seed: u64 },
}

/// Single-layer NSW-style approximate inner-product graph.
pub fn build_approx_ip_graph(
    items: &EmbeddingMatrix,
    k: usize,
    ef_construction: usize,
) -> Result<ProximityGraph> {
    build_approx_ip_graph_with(items, k, ef_construction, InsertOrder::Input)
}

/// As [`build_approx_ip_graph`] with an explicit insertion order.
pub fn build_approx_ip_graph_with(
    items: &EmbeddingMatrix,
    k: usize,
    ef_construction: usize,
    order: InsertOrder,
) -> Result<ProximityGraph> {
    check_k(k, items)?;
    if ef_construction == 0 {
        return Err(Error::invalid("ef_construction must be positive"));
    }
    // Insertion searches with a beam at least k wide and keeps the top k.
    let search = SearchParams::new(ef_construction.max(k), k)?;
    let n = items.count();
    let budget = 2 * k;
    let sequence: Vec<usize> = match order {
        InsertOrder::Input => (0..n).collect(),
        InsertOrder::Shuffled { seed } => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut seq: Vec<usize> = (0..n).collect();
            seq.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            seq
        }
    };

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut visited = vec![0u32; n];
    let mut stamp = 0u32;
    // Entry point tracks the largest-norm node inserted so far.
    let norms: Vec<f64> = items.norms();
    let mut entry = sequence[0];
    let mut inserted = 0usize;

    for &node in &sequence {
        if inserted > 0 {
            stamp += 1;
            let found = beam_search(
                items,
                &adjacency,
                entry,
                items.vector(node),
                search.ef,
                &mut visited,
                stamp,
            );
            for &(value, nb) in found.iter().take(search.k_out) {
                adjacency[node].push(nb);
                offer_reverse_edge(items, &mut adjacency, budget, nb, node, value);
            }
        }
        inserted += 1;
        if better_of((norms[entry], entry), (norms[node], node)) == (norms[node], node) {
            entry = node;
        }
    }

    let graph = ProximityGraph {
        n,
        k,
        mode: GraphMode::Approximate,
        entry_point: entry,
        adjacency,
    };
    graph.validate()?;
    Ok(graph)
}

/// Adds the reverse edge `from -> to`, then drops `from`'s weakest edge
/// (smallest inner product, larger index evicted on ties) if over budget.
fn offer_reverse_edge(
    items: &EmbeddingMatrix,
    adjacency: &mut [Vec<usize>],
    budget: usize,
    from: usize,
    to: usize,
    value: f64,
) {
    debug_assert_eq!(value, inner_product(items.vector(from), items.vector(to)));
    adjacency[from].push(to);
    if adjacency[from].len() <= budget {
        return;
    }
    let xf = items.vector(from);
    let mut weakest = 0usize;
    let mut weakest_key = (f64::INFINITY, 0usize);
    for (pos, &dest) in adjacency[from].iter().enumerate() {
        let v = inner_product(xf, items.vector(dest));
        // Weakest = smallest value; among equals the larger index goes.
        let is_weaker = v < weakest_key.0 || (v == weakest_key.0 && dest > weakest_key.1);
        if pos == 0 || is_weaker {
            weakest = pos;
            weakest_key = (v, dest);
        }
    }
    adjacency[from].remove(weakest);
}

/// Best-first beam search for the single item maximizing `q . x`, starting at
/// the graph's entry point. With `ef >= N` on a graph whose every node is
/// reachable from the entry, this equals the exact scan.
pub fn greedy_search_top1(
    graph: &ProximityGraph,
    items: &EmbeddingMatrix,
    q: &[f64],
    ef: usize,
) -> (usize, f64) {
    let mut visited = vec![0u32; graph.n];
    let found = beam_search(
        items,
        &graph.adjacency,
        graph.entry_point,
        q,
        ef,
        &mut visited,
        1,
    );
    let (value, idx) = found[0];
    (idx, value)
}

/// The `m` items of largest in-degree, ranked descending with index tie-break.
pub fn select_max_in_degree(
    items: &EmbeddingMatrix,
    m: usize,
    graph: &ProximityGraph,
) -> Result<SelectionResult> {
    if m == 0 || m > items.count() {
        return Err(Error::invalid(format!(
            "subset size m = {m} out of range 1..={}",
            items.count()
        )));
    }
    if graph.n != items.count() {
        return Err(Error::invalid(format!(
            "graph has {} nodes but item set has {}",
            graph.n,
            items.count()
        )));
    }
    let degrees: Vec<f64> = graph.in_degrees().iter().map(|&d| d as f64).collect();
    let mut ranked = rank_desc(&degrees);
    ranked.truncate(m);
    let scores = ranked.iter().map(|&i| degrees[i]).collect();
    SelectionResult::new(Method::MaxInDegree, ranked, scores, items)
}

/// How IPGS finds each user's top-1 item.
#[derive(Debug, Clone, Copy)]
pub enum IpgsSearch<'a> {
    /// Exact per-user linear scan.
    Exact,
    /// Approximate beam search over a proximity graph.
    Graph { graph: &'a ProximityGraph, ef: usize },
}

/// Per-user top-1 vote counting: finds each warm user's favorite item, counts
/// nomination frequencies, and returns the `m` most-nominated items (frequency
/// descending, index tie-break). Users are searched in parallel; tallies are
/// merged in user order.
pub fn select_ipgs(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
    search: IpgsSearch<'_>,
) -> Result<SelectionResult> {
    if m == 0 || m > items.count() {
        return Err(Error::invalid(format!(
            "subset size m = {m} out of range 1..={}",
            items.count()
        )));
    }
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    if users.dim() != items.dim() {
        return Err(Error::DimensionMismatch {
            expected: items.dim(),
            got: users.dim(),
        });
    }
    let (method, winners): (Method, Vec<usize>) = match search {
        IpgsSearch::Exact => {
            let winners = (0..users.count())
                .into_par_iter()
                .map(|w| crate::oracle::argmax_item(users.vector(w), items).1)
                .collect();
            (Method::IpgsExact, winners)
        }
        IpgsSearch::Graph { graph, ef } => {
            if graph.n != items.count() {
                return Err(Error::invalid(format!(
                    "graph has {} nodes but item set has {}",
                    graph.n,
                    items.count()
                )));
            }
            let winners = (0..users.count())
                .into_par_iter()
                .map_init(
                    || vec![0u32; graph.n],
                    |visited, w| {
                        let found = beam_search(
                            items,
                            &graph.adjacency,
                            graph.entry_point,
                            users.vector(w),
                            ef,
                            visited,
                            w as u32 + 1,
                        );
                        found[0].1
                    },
                )
                .collect();
            (Method::Ipgs, winners)
        }
    };
    let mut freq = vec![0usize; items.count()];
    for &i in &winners {
        freq[i] += 1;
    }
    let freq_f: Vec<f64> = freq.iter().map(|&c| c as f64).collect();
    let mut ranked = rank_desc(&freq_f);
    ranked.truncate(m);
    let scores = ranked.iter().map(|&i| freq_f[i]).collect();
    SelectionResult::new(method, ranked, scores, items)
}

const GRAPH_MAGIC: &str = "coldstart-ipgraph";
const GRAPH_VERSION: u32 = 1;

/// Writes the versioned text dump: a magic+version line, a header with `n`,
/// `k`, mode and entry point, then one out-degree-prefixed adjacency row per
/// node.
pub fn write_graph<W: Write>(graph: &ProximityGraph, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{GRAPH_MAGIC} {GRAPH_VERSION}")?;
    writeln!(
        out,
        "n={} k={} mode={} entry={}",
        graph.n,
        graph.k,
        graph.mode.tag(),
        graph.entry_point
    )?;
    for row in &graph.adjacency {
        write!(out, "{}", row.len())?;
        for &j in row {
            write!(out, " {j}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_graph(graph: &ProximityGraph, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_graph(graph, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a graph dump produced by [`write_graph`], re-validating every
/// structural invariant.
pub fn read_graph<R: Read>(input: R, path: &Path) -> Result<ProximityGraph> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        msg,
    };
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i, l)),
            Some((i, Err(e))) => Err(parse_err(i, e.to_string())),
            None => Err(Error::invalid(format!(
                "{}: unexpected end of file, expected {expect}",
                path.display()
            ))),
        }
    };

    let (i, magic_line) = next_line("magic header")?;
    let mut parts = magic_line.split_whitespace();
    if parts.next() != Some(GRAPH_MAGIC) {
        return Err(parse_err(i, format!("not a {GRAPH_MAGIC} file")));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(i, "missing version".into()))?;
    if version != GRAPH_VERSION {
        return Err(parse_err(i, format!("unsupported version {version}")));
    }

    let (i, header) = next_line("graph header")?;
    let mut n = None;
    let mut k = None;
    let mut mode = None;
    let mut entry = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(i, format!("malformed header field {field:?}")))?;
        match key {
            "n" => n = value.parse::<usize>().ok(),
            "k" => k = value.parse::<usize>().ok(),
            "mode" => mode = value.parse::<GraphMode>().ok(),
            "entry" => entry = value.parse::<usize>().ok(),
            other => return Err(parse_err(i, format!("unknown header key {other:?}"))),
        }
    }
    let (n, k, mode, entry) = match (n, k, mode, entry) {
        (Some(n), Some(k), Some(mode), Some(entry)) => (n, k, mode, entry),
        _ => return Err(parse_err(i, "incomplete graph header".into())),
    };

    let mut adjacency = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, row) = next_line("adjacency row")?;
        let mut fields = row.split_whitespace();
        let deg: usize = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(i, "missing out-degree".into()))?;
        let edges: Vec<usize> = fields
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|e| parse_err(i, format!("bad edge index {f:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if edges.len() != deg {
            return Err(parse_err(
                i,
                format!("row declares {deg} edges but has {}", edges.len()),
            ));
        }
        adjacency.push(edges);
    }

    let graph = ProximityGraph {
        n,
        k,
        mode,
        entry_point: entry,
        adjacency,
    };
    graph.validate()?;
    Ok(graph)
}

pub fn load_graph(path: &Path) -> Result<ProximityGraph> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_graph(file, path)
}
