//! Ranking metrics against per-user exact top-M ground truth, plus the
//! norm-bias diagnostics (normalized norm distribution, norm-group occupancy
//! of pooled MIPS results, and norm-vs-popularity buckets).

use std::collections::HashSet;

use rayon::prelude::*;

use crate::domain::{EmbeddingMatrix, Method, SelectionResult};
use crate::error::{Error, Result};
use crate::harness::RatingsTable;
use crate::oracle::exact_top_k;

/// Per-method ranking metrics for one population at one subset size.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: Method,
    pub m: usize,
    pub population: crate::harness::Population,
    pub precision: f64,
    pub map: f64,
    pub ndcg: f64,
    pub fav_loss_value: f64,
}

impl MetricReport {
    /// Evaluates one selection against a user population: exact favorite-item
    /// loss plus the three ranking metrics averaged over the users.
    pub fn evaluate(
        users: &EmbeddingMatrix,
        items: &EmbeddingMatrix,
        y: &SelectionResult,
        m: usize,
        population: crate::harness::Population,
    ) -> Result<Self> {
        let best = crate::oracle::user_best(users, items);
        let loss = crate::oracle::fav_loss_with(&best, users, items, y.ranked());
        Ok(Self {
            method: y.method,
            m,
            population,
            precision: mean_precision_at_m(users, items, y, m)?,
            map: map_at_m(users, items, y, m)?,
            ndcg: mean_ndcg_at_m(users, items, y, m)?,
            fav_loss_value: loss,
        })
    }
}

/// Item-norm summary: norms normalized by the max norm, their median, and the
/// share of pooled top-k results captured by each norm-percentile group.
#[derive(Debug, Clone, PartialEq)]
pub struct NormDiagnostics {
    pub normalized_norms: Vec<f64>,
    pub median: f64,
    pub group_occupancy: Vec<NormGroup>,
}

/// One norm-percentile group: items whose norm rank falls in
/// `(prev upper, upper_pct]` percent of the norm-descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormGroup {
    pub upper_pct: f64,
    pub item_count: usize,
    pub share: f64,
}

fn check_rank_args(y: &SelectionResult, m: usize, items: &EmbeddingMatrix) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("metric cutoff m must be positive"));
    }
    if y.m() < m {
        return Err(Error::invalid(format!(
            "ranking has {} entries, need at least m = {m}",
            y.m()
        )));
    }
    if m > items.count() {
        return Err(Error::invalid(format!(
            "m = {m} exceeds item count {}",
            items.count()
        )));
    }
    Ok(())
}

fn top_m_set(u: &[f64], items: &EmbeddingMatrix, m: usize) -> HashSet<usize> {
    exact_top_k(u, items, m).item_indices.into_iter().collect()
}

/// Fraction of the ranking's first `m` entries inside the user's exact top-M.
pub fn precision_at_m(
    u: &[f64],
    items: &EmbeddingMatrix,
    y: &SelectionResult,
    m: usize,
) -> Result<f64> {
    check_rank_args(y, m, items)?;
    let truth = top_m_set(u, items, m);
    let hits = y.ranked()[..m].iter().filter(|i| truth.contains(i)).count();
    Ok(hits as f64 / m as f64)
}

/// Average precision: mean over ranks of hit-indicator times running
/// precision, divided by `m`.
pub fn ap_at_m(u: &[f64], items: &EmbeddingMatrix, y: &SelectionResult, m: usize) -> Result<f64> {
    check_rank_args(y, m, items)?;
    let truth = top_m_set(u, items, m);
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (r, i) in y.ranked()[..m].iter().enumerate() {
        if truth.contains(i) {
            hits += 1;
            acc += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(acc / m as f64)
}

/// Mean of [`ap_at_m`] over the user population, evaluated in parallel and
/// averaged in user order.
pub fn map_at_m(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    y: &SelectionResult,
    m: usize,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    let per_user: Vec<f64> = (0..users.count())
        .into_par_iter()
        .map(|w| ap_at_m(users.vector(w), items, y, m))
        .collect::<Result<_>>()?;
    Ok(per_user.iter().sum::<f64>() / users.count() as f64)
}

/// NDCG with binary gains `2^rel - 1` and log-2 discounts, normalized so the
/// perfect ranking scores exactly 1.
pub fn ndcg_at_m(u: &[f64], items: &EmbeddingMatrix, y: &SelectionResult, m: usize) -> Result<f64> {
    check_rank_args(y, m, items)?;
    let truth = top_m_set(u, items, m);
    let discount = |rank: usize| ((rank + 1) as f64).log2();
    let mut dcg = 0.0;
    for (r, i) in y.ranked()[..m].iter().enumerate() {
        if truth.contains(i) {
            dcg += 1.0 / discount(r + 1);
        }
    }
    let ideal: f64 = (1..=m).map(|r| 1.0 / discount(r)).sum();
    Ok(dcg / ideal)
}

/// Mean of [`ndcg_at_m`] over the user population.
pub fn mean_ndcg_at_m(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    y: &SelectionResult,
    m: usize,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    let per_user: Vec<f64> = (0..users.count())
        .into_par_iter()
        .map(|w| ndcg_at_m(users.vector(w), items, y, m))
        .collect::<Result<_>>()?;
    Ok(per_user.iter().sum::<f64>() / users.count() as f64)
}

/// Mean of [`precision_at_m`] over the user population.
pub fn mean_precision_at_m(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    y: &SelectionResult,
    m: usize,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    let per_user: Vec<f64> = (0..users.count())
        .into_par_iter()
        .map(|w| precision_at_m(users.vector(w), items, y, m))
        .collect::<Result<_>>()?;
    Ok(per_user.iter().sum::<f64>() / users.count() as f64)
}

/// Norms divided by the max norm, with their median (lower-median convention
/// for even counts). Errors when every item is the zero vector.
pub fn norm_distribution(items: &EmbeddingMatrix) -> Result<NormDiagnostics> {
    if items.is_empty() {
        return Err(Error::invalid("item set is empty"));
    }
    let norms = items.norms();
    let max = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::invalid(
            "norm distribution undefined: all items have zero norm",
        ));
    }
    let normalized: Vec<f64> = norms.iter().map(|&n| n / max).collect();
    let mut sorted = normalized.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[(sorted.len() - 1) / 2];
    Ok(NormDiagnostics {
        normalized_norms: normalized,
        median,
        group_occupancy: Vec::new(),
    })
}

/// Partitions items into norm-percentile groups (descending norm order) and
/// reports each group's share of the pooled exact top-k results of all users.
///
/// `percentile_edges` are cumulative upper bounds in percent, e.g.
/// `[0.1, 1, 5, 25, 100]` for "top 0.1%", "0.1-1%", ... The final edge must
/// be 100 so the groups partition the items.
pub fn norm_group_occupancy(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    k: usize,
    percentile_edges: &[f64],
) -> Result<Vec<NormGroup>> {
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    if k == 0 || k > items.count() {
        return Err(Error::invalid(format!(
            "pool depth k = {k} out of range 1..={}",
            items.count()
        )));
    }
    if percentile_edges.is_empty()
        || percentile_edges.windows(2).any(|w| w[0] >= w[1])
        || percentile_edges.first().copied().unwrap_or(0.0) <= 0.0
        || percentile_edges.last().copied() != Some(100.0)
    {
        return Err(Error::invalid(
            "percentile edges must be strictly increasing, positive, and end at 100",
        ));
    }

    let n = items.count();
    let norms = items.norms();
    // Rank items by norm descending; rank r belongs to the first group whose
    // cumulative count ceil(N * edge / 100) exceeds r.
    let order = crate::domain::rank_desc(&norms);
    let mut group_of = vec![0usize; n];
    let mut counts = vec![0usize; percentile_edges.len()];
    let cum: Vec<usize> = percentile_edges
        .iter()
        .map(|&pct| ((n as f64 * pct / 100.0).ceil() as usize).clamp(1, n))
        .collect();
    for (rank, &item) in order.iter().enumerate() {
        let g = cum.iter().position(|&c| rank < c).expect("last edge covers all");
        group_of[item] = g;
        counts[g] += 1;
    }

    // Pool the exact top-k of every user (a multiset of size k * W).
    let group_hits: Vec<Vec<usize>> = (0..users.count())
        .into_par_iter()
        .map(|w| {
            let top = exact_top_k(users.vector(w), items, k);
            let mut hits = vec![0usize; percentile_edges.len()];
            for i in top.item_indices {
                hits[group_of[i]] += 1;
            }
            hits
        })
        .collect();
    let mut totals = vec![0usize; percentile_edges.len()];
    for hits in &group_hits {
        for (t, h) in totals.iter_mut().zip(hits) {
            *t += h;
        }
    }
    let pool = (k * users.count()) as f64;
    Ok(percentile_edges
        .iter()
        .zip(counts)
        .zip(totals)
        .map(|((&upper_pct, item_count), total)| NormGroup {
            upper_pct,
            item_count,
            share: total as f64 / pool,
        })
        .collect())
}

/// One bucket of the norm-vs-popularity diagnostic: items receiving exactly
/// `high_count` ratings at or above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct NormByRatingCount {
    pub high_count: usize,
    pub item_count: usize,
    pub mean_norm: f64,
    pub var_norm: f64,
}

/// For each high-rating count value, the mean and population variance of the
/// norms of the items with that count. Items absent from the ratings count 0.
pub fn norm_vs_high_ratings(
    items: &EmbeddingMatrix,
    ratings: &RatingsTable,
    high_threshold: f64,
) -> Result<Vec<NormByRatingCount>> {
    let mut counts = vec![0usize; items.count()];
    for t in ratings.triples() {
        let item_id = ratings.item_id(t.item);
        let idx = items.index_of(item_id).ok_or_else(|| {
            Error::invalid(format!("rating references unknown item id {item_id:?}"))
        })?;
        if t.rating >= high_threshold {
            counts[idx] += 1;
        }
    }
    let norms = items.norms();
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let mut buckets = Vec::new();
    for c in 0..=max_count {
        let members: Vec<f64> = (0..items.count())
            .filter(|&i| counts[i] == c)
            .map(|i| norms[i])
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let mean = members.iter().sum::<f64>() / n;
        let var = members.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        buckets.push(NormByRatingCount {
            high_count: c,
            item_count: members.len(),
            mean_norm: mean,
            var_norm: var,
        });
    }
    Ok(buckets)
}
