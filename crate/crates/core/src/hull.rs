//! Extreme-point extraction for the item cloud.
//!
//! The optimal selection only ever uses extreme points of the item set, so
//! the extreme set is a sound candidate filter. High-dimensional exact hulls
//! are not attempted; instead, seeded support-direction sampling certifies a
//! subset of the extreme points (every returned index is extreme, but the set
//! may be incomplete). A gift-wrapping 2-D hull serves as the desk-scale
//! oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::domain::{better_of, inner_product, EmbeddingMatrix, Method, SelectionResult};
use crate::error::{Error, Result};
use crate::selectors;

/// Item indices certified (or exactly computed) as extreme points of the
/// convex hull of the item set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeSet {
    /// Sorted ascending.
    pub indices: Vec<usize>,
    /// Sampling budget used (0 in exact mode).
    pub num_directions: usize,
    pub exact: bool,
    /// For sampled sets: the first direction that certified each index,
    /// aligned with `indices`. Kept for diagnosing incomplete coverage.
    pub witnesses: Vec<Vec<f64>>,
}

impl ExtremeSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// `argmax_i d . x_i` with the ascending-index tie-break.
/// Panics on a zero direction (every support value would tie at 0).
pub fn support_argmax(items: &EmbeddingMatrix, d: &[f64]) -> usize {
    assert!(!items.is_empty(), "support_argmax over empty item set");
    assert!(
        d.iter().any(|&x| x != 0.0),
        "support_argmax: zero direction"
    );
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, x) in items.vectors().enumerate() {
        best = better_of(best, (inner_product(d, x), i));
    }
    best.1
}

/// Draws `count` directions uniformly on the unit sphere from a seeded
/// generator: normalized standard Gaussian vectors, drawn sequentially so a
/// longer stream extends a shorter one with the same seed.
pub fn direction_stream(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions = Vec::with_capacity(count);
    while directions.len() < count {
        let mut d: Vec<f64> = (0..dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let len = crate::domain::norm(&d);
        if len == 0.0 {
            continue; // astronomically unlikely; redraw
        }
        for x in &mut d {
            *x /= len;
        }
        directions.push(d);
    }
    directions
}

/// Samples `num_directions` support directions and collects the argmax
/// winners. Sound (every winner is an extreme point up to near-degenerate
/// ties) but not complete: small faces may be missed.
pub fn approx_extreme_points(
    items: &EmbeddingMatrix,
    num_directions: usize,
    seed: u64,
) -> ExtremeSet {
    assert!(num_directions >= 1, "num_directions must be positive");
    assert!(!items.is_empty(), "approx_extreme_points over empty item set");
    let directions = direction_stream(items.dim(), num_directions, seed);
    let winners: Vec<usize> = directions
        .par_iter()
        .map(|d| support_argmax(items, d))
        .collect();
    // Dedupe keeping the first witnessing direction per index, then sort.
    let mut first_witness: Vec<Option<usize>> = vec![None; items.count()];
    for (probe, &w) in winners.iter().enumerate() {
        if first_witness[w].is_none() {
            first_witness[w] = Some(probe);
        }
    }
    let mut indices: Vec<usize> = (0..items.count())
        .filter(|&i| first_witness[i].is_some())
        .collect();
    indices.sort_unstable();
    let witnesses = indices
        .iter()
        .map(|&i| directions[first_witness[i].unwrap()].clone())
        .collect();
    ExtremeSet {
        indices,
        num_directions,
        exact: false,
        witnesses,
    }
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Gift-wrapping hull vertices for 2-D items; strict extremes only, so
/// collinear boundary points are excluded. Exact-duplicate coordinates keep
/// the smallest index.
pub fn exact_hull_2d(items: &EmbeddingMatrix) -> Result<ExtremeSet> {
    if items.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: items.dim(),
        });
    }
    if items.is_empty() {
        return Err(Error::invalid("hull of an empty item set"));
    }

    // Deduplicate exact coordinate copies, keeping the lowest index.
    let mut nodes: Vec<usize> = Vec::with_capacity(items.count());
    for i in 0..items.count() {
        let xi = items.vector(i);
        if !nodes.iter().any(|&j| items.vector(j) == xi) {
            nodes.push(i);
        }
    }

    let exact = |indices: Vec<usize>| ExtremeSet {
        indices,
        num_directions: 0,
        exact: true,
        witnesses: Vec::new(),
    };

    if nodes.len() == 1 {
        return Ok(exact(nodes));
    }
    if nodes.len() == 2 {
        return Ok(exact(nodes));
    }

    // Start at the lexicographically smallest point (x, then y), always a vertex.
    let start = *nodes
        .iter()
        .min_by(|&&a, &&b| {
            let pa = items.vector(a);
            let pb = items.vector(b);
            pa[0]
                .partial_cmp(&pb[0])
                .unwrap()
                .then(pa[1].partial_cmp(&pb[1]).unwrap())
                .then(a.cmp(&b))
        })
        .unwrap();

    let mut hull = Vec::new();
    let mut current = start;
    loop {
        hull.push(current);
        // Pick the most counter-clockwise next point; among collinear
        // candidates take the farthest so edge-interior points are skipped.
        let mut next = usize::MAX;
        for &cand in &nodes {
            if cand == current {
                continue;
            }
            if next == usize::MAX {
                next = cand;
                continue;
            }
            let c = cross(
                items.vector(current),
                items.vector(next),
                items.vector(cand),
            );
            if c < 0.0 {
                next = cand;
            } else if c == 0.0
                && dist2(items.vector(current), items.vector(cand))
                    > dist2(items.vector(current), items.vector(next))
            {
                next = cand;
            }
        }
        if next == start || hull.len() > nodes.len() {
            break;
        }
        current = next;
    }

    let mut indices = hull;
    indices.sort_unstable();
    Ok(exact(indices))
}

/// Selection through the extreme-point filter: greedy coverage maximization
/// restricted to the sampled extreme set, continuing over the remaining items
/// once the extremes are exhausted. When the extreme set fits within `m` the
/// result therefore contains all of it.
pub fn select_hull(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
    num_directions: usize,
    seed: u64,
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
    let extremes = approx_extreme_points(items, num_directions, seed);

    let mut taken = vec![false; items.count()];
    let mut state = selectors::GreedyState::new(users.count());
    let mut scores = Vec::with_capacity(m);

    // Greedy over the extreme candidates first; if they run out before m,
    // continue greedily over the remaining items.
    let restricted_picks = m.min(extremes.len());
    let (first_score, first) = selectors::parallel_argmax_over(&extremes.indices, &taken, |i| {
        selectors::preference_sum(users, items, i)
    });
    taken[first] = true;
    state.insert(users, items, first);
    scores.push(first_score);
    while state.chosen.len() < restricted_picks {
        let (gain, pick) = selectors::parallel_argmax_over(&extremes.indices, &taken, |i| {
            selectors::marginal_gain(users, items, &state.best_per_user, i)
        });
        taken[pick] = true;
        state.insert(users, items, pick);
        scores.push(gain);
    }
    while state.chosen.len() < m {
        let (gain, pick) = selectors::parallel_argmax(items.count(), &taken, |i| {
            selectors::marginal_gain(users, items, &state.best_per_user, i)
        });
        taken[pick] = true;
        state.insert(users, items, pick);
        scores.push(gain);
    }
    SelectionResult::new(Method::Hull, state.chosen, scores, items)
}
