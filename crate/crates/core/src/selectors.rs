//! The non-graph selection algorithms: largest-norm ranking, mean-user
//! ranking, and greedy maximization of the coverage objective.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::domain::{
    better_of, inner_product, rank_desc, EmbeddingMatrix, Method, SelectionResult,
};
use crate::error::{Error, Result};

fn check_m(m: usize, items: &EmbeddingMatrix) -> Result<()> {
    if m == 0 || m > items.count() {
        return Err(Error::invalid(format!(
            "subset size m = {m} out of range 1..={}",
            items.count()
        )));
    }
    Ok(())
}

/// The `m` items of largest Euclidean norm, ranked by norm descending.
pub fn select_max_norm(items: &EmbeddingMatrix, m: usize) -> Result<SelectionResult> {
    check_m(m, items)?;
    let norms = items.norms();
    let mut ranked = rank_desc(&norms);
    ranked.truncate(m);
    let scores = ranked.iter().map(|&i| norms[i]).collect();
    SelectionResult::new(Method::MaxNorm, ranked, scores, items)
}

/// Mean of the warm-user vectors, summed sequentially in index order.
pub fn mean_user(users: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    let mut q = vec![0.0; users.dim()];
    for u in users.vectors() {
        for (acc, x) in q.iter_mut().zip(u) {
            *acc += x;
        }
    }
    let inv = 1.0 / users.count() as f64;
    for x in &mut q {
        *x *= inv;
    }
    Ok(q)
}

/// The `m` items with the largest inner product against the mean warm user.
pub fn select_user_expectation(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
) -> Result<SelectionResult> {
    check_m(m, items)?;
    let q = mean_user(users)?;
    if q.len() != items.dim() {
        return Err(Error::DimensionMismatch {
            expected: items.dim(),
            got: q.len(),
        });
    }
    let scores_all: Vec<f64> = items.vectors().map(|x| inner_product(&q, x)).collect();
    let mut ranked = rank_desc(&scores_all);
    ranked.truncate(m);
    let scores = ranked.iter().map(|&i| scores_all[i]).collect();
    SelectionResult::new(Method::UserExpectation, ranked, scores, items)
}

/// Greedy working state: the chosen prefix and each user's current best inner
/// product over it, maintained exactly after every insertion.
#[derive(Debug, Clone)]
pub struct GreedyState {
    pub chosen: Vec<usize>,
    pub best_per_user: Vec<f64>,
}

impl GreedyState {
    pub fn new(w: usize) -> Self {
        Self {
            chosen: Vec::new(),
            best_per_user: vec![f64::NEG_INFINITY; w],
        }
    }

    pub fn insert(&mut self, users: &EmbeddingMatrix, items: &EmbeddingMatrix, item: usize) {
        let x = items.vector(item);
        for (w, best) in self.best_per_user.iter_mut().enumerate() {
            let v = inner_product(users.vector(w), x);
            if v > *best {
                *best = v;
            }
        }
        self.chosen.push(item);
    }
}

/// Marginal coverage gain of adding `item` on top of `best_per_user`,
/// summed sequentially over users. Every greedy variant (plain, lazy, and the
/// hull-restricted one) ranks candidates by this exact expression so their
/// selections agree bit for bit.
#[inline]
pub(crate) fn marginal_gain(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    best_per_user: &[f64],
    item: usize,
) -> f64 {
    let x = items.vector(item);
    let mut acc = 0.0;
    for (w, &best) in best_per_user.iter().enumerate() {
        let v = inner_product(users.vector(w), x);
        if v > best {
            acc += v - best;
        }
    }
    acc
}

/// Raw preference sum `sum_w u_w . x`, the first-pick ranking key.
#[inline]
pub(crate) fn preference_sum(users: &EmbeddingMatrix, items: &EmbeddingMatrix, item: usize) -> f64 {
    let x = items.vector(item);
    let mut acc = 0.0;
    for u in users.vectors() {
        acc += inner_product(u, x);
    }
    acc
}

pub(crate) fn parallel_argmax<F>(n: usize, taken: &[bool], key: F) -> (f64, usize)
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..n)
        .into_par_iter()
        .filter(|&i| !taken[i])
        .map(|i| (key(i), i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), better_of)
}

/// [`parallel_argmax`] restricted to an explicit candidate list.
pub(crate) fn parallel_argmax_over<F>(candidates: &[usize], taken: &[bool], key: F) -> (f64, usize)
where
    F: Fn(usize) -> f64 + Sync,
{
    candidates
        .par_iter()
        .filter(|&&i| !taken[i])
        .map(|&i| (key(i), i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), better_of)
}

/// Greedy maximization of `f(Y) = sum_u max_{y in Y} u . y` under a size-`m`
/// budget. Each iteration scans the remaining candidates in parallel at a cost
/// of O(WN) inner products; the result ranking is insertion order with the
/// marginal gain at insertion as each item's score.
///
/// With `lazy` set, candidates are scheduled by stale marginal gains on a
/// priority queue (CELF-style). Gains only shrink as the chosen set grows, so
/// a candidate whose gain is current is safe to take; the sequence returned is
/// identical to the plain scan under the shared index tie-break.
pub fn select_submodular_greedy(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
    lazy: bool,
) -> Result<SelectionResult> {
    check_m(m, items)?;
    if users.is_empty() {
        return Err(Error::invalid("user set is empty"));
    }
    if users.dim() != items.dim() {
        return Err(Error::DimensionMismatch {
            expected: items.dim(),
            got: users.dim(),
        });
    }
    let n = items.count();
    let mut taken = vec![false; n];
    let mut state = GreedyState::new(users.count());
    let mut scores = Vec::with_capacity(m);

    // First pick: argmax of the raw preference sum.
    let (first_score, first) = parallel_argmax(n, &taken, |i| preference_sum(users, items, i));
    taken[first] = true;
    state.insert(users, items, first);
    scores.push(first_score);

    if lazy {
        lazy_rounds(users, items, m, &mut taken, &mut state, &mut scores);
    } else {
        while state.chosen.len() < m {
            let (gain, pick) =
                parallel_argmax(n, &taken, |i| marginal_gain(users, items, &state.best_per_user, i));
            taken[pick] = true;
            state.insert(users, items, pick);
            scores.push(gain);
        }
    }
    SelectionResult::new(
        if lazy { Method::GreedyLazy } else { Method::Greedy },
        state.chosen,
        scores,
        items,
    )
}

/// Heap entry ordered by gain descending, then index ascending, so ties pop
/// the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LazyEntry {
    gain: f64,
    item: usize,
    round: usize,
}

impl Eq for LazyEntry {}

impl Ord for LazyEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .partial_cmp(&other.gain)
            .unwrap_or(Ordering::Equal)
            .then(other.item.cmp(&self.item))
    }
}

impl PartialOrd for LazyEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn lazy_rounds(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
    taken: &mut [bool],
    state: &mut GreedyState,
    scores: &mut Vec<f64>,
) {
    let n = items.count();
    // Seed the queue with every candidate's gain after the first pick.
    let gains: Vec<f64> = {
        let taken: &[bool] = taken;
        let best: &[f64] = &state.best_per_user;
        (0..n)
            .into_par_iter()
            .map(|i| {
                if taken[i] {
                    f64::NEG_INFINITY
                } else {
                    marginal_gain(users, items, best, i)
                }
            })
            .collect()
    };
    let mut heap = BinaryHeap::with_capacity(n);
    for (i, &gain) in gains.iter().enumerate() {
        if !taken[i] {
            heap.push(LazyEntry {
                gain,
                item: i,
                round: 1,
            });
        }
    }

    let mut round = 1usize;
    while state.chosen.len() < m {
        let top = heap.pop().expect("lazy greedy heap exhausted before m picks");
        if top.round == round {
            taken[top.item] = true;
            state.insert(users, items, top.item);
            scores.push(top.gain);
            round += 1;
        } else {
            let gain = marginal_gain(users, items, &state.best_per_user, top.item);
            heap.push(LazyEntry {
                gain,
                item: top.item,
                round,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact_top_k;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(vecs: &[&[f64]]) -> EmbeddingMatrix {
        let dim = vecs[0].len();
        let ids = (0..vecs.len()).map(|i| format!("i{i}")).collect();
        EmbeddingMatrix::new(dim, ids, vecs.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    fn random_instance(
        seed: u64,
        n: usize,
        w: usize,
        dim: usize,
    ) -> (EmbeddingMatrix, EmbeddingMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |count: usize, prefix: &str| {
            let ids = (0..count).map(|i| format!("{prefix}{i}")).collect();
            let data: Vec<f64> = (0..count * dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            EmbeddingMatrix::from_flat(dim, ids, data).unwrap()
        };
        let items = draw(n, "x");
        let users = draw(w, "u");
        (items, users)
    }

    #[test]
    fn max_norm_hand_cases() {
        let items = matrix(&[&[3.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]]);
        let sel = select_max_norm(&items, 2).unwrap();
        assert_eq!(sel.ranked(), &[0, 1]);
        assert_eq!(sel.scores(), &[3.0, 2.0]);

        let all = select_max_norm(&items, 3).unwrap();
        assert_eq!(all.ranked(), &[0, 1, 2]);

        let ties = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        let sel = select_max_norm(&ties, 2).unwrap();
        assert_eq!(sel.ranked(), &[0, 1]);
    }

    #[test]
    fn user_expectation_hand_cases() {
        let items = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.6]]);
        let users = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let sel = select_user_expectation(&users, &items, 1).unwrap();
        assert_eq!(sel.ranked(), &[2]); // q = (0.5, 0.5): scores 0.5, 0.5, 0.6

        // A single user reduces to that user's exact top-k.
        let one = matrix(&[&[0.3, 0.9]]);
        let sel = select_user_expectation(&one, &items, 2).unwrap();
        let top = exact_top_k(one.vector(0), &items, 2);
        assert_eq!(sel.ranked(), top.item_indices.as_slice());

        // Users symmetric around the origin: q = 0, all scores tie.
        let sym = matrix(&[&[1.0, 2.0], &[-1.0, -2.0]]);
        let sel = select_user_expectation(&sym, &items, 2).unwrap();
        assert_eq!(sel.ranked(), &[0, 1]);
    }

    #[test]
    fn user_expectation_rejects_empty_users() {
        let items = matrix(&[&[1.0]]);
        let users = EmbeddingMatrix::new(1, vec![], vec![]).unwrap();
        assert!(select_user_expectation(&users, &items, 1).is_err());
    }

    #[test]
    fn greedy_hand_cases() {
        let items = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.6]]);
        let users = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);

        let sel = select_submodular_greedy(&users, &items, 1, false).unwrap();
        assert_eq!(sel.ranked(), &[2]); // f = 1.2 beats 1.0, 1.0
        assert!((sel.scores()[0] - 1.2).abs() < 1e-12);

        let sel = select_submodular_greedy(&users, &items, 2, false).unwrap();
        assert_eq!(sel.ranked(), &[2, 0]); // both additions gain 0.4; index tie-break

        // Single user: the first pick is that user's exact top-1.
        let one = matrix(&[&[-0.2, 0.7]]);
        let sel = select_submodular_greedy(&one, &items, 1, false).unwrap();
        let top = exact_top_k(one.vector(0), &items, 1);
        assert_eq!(sel.ranked(), top.item_indices.as_slice());
    }

    #[test]
    fn greedy_prefix_property() {
        for seed in 0..20 {
            let (items, users) = random_instance(seed, 14, 9, 3);
            let full = select_submodular_greedy(&users, &items, 6, false).unwrap();
            for m in 1..6 {
                let part = select_submodular_greedy(&users, &items, m, false).unwrap();
                assert_eq!(part.ranked(), &full.ranked()[..m]);
                assert_eq!(part.scores(), &full.scores()[..m]);
            }
        }
    }

    #[test]
    fn lazy_matches_plain_greedy() {
        for seed in 0..120 {
            let (items, users) = random_instance(seed, 16, 7, 3);
            let m = 1 + (seed as usize % 8);
            let plain = select_submodular_greedy(&users, &items, m, false).unwrap();
            let lazy = select_submodular_greedy(&users, &items, m, true).unwrap();
            assert_eq!(plain.ranked(), lazy.ranked(), "seed {seed}");
            assert_eq!(plain.scores(), lazy.scores(), "seed {seed}");
        }
    }

    #[test]
    fn greedy_marginal_gains_non_increasing() {
        for seed in 0..20 {
            let (items, users) = random_instance(seed + 500, 15, 8, 4);
            let sel = select_submodular_greedy(&users, &items, 7, false).unwrap();
            // Gains after the first pick shrink by submodularity; the first
            // entry is the raw preference sum, not a marginal.
            for w in sel.scores()[1..].windows(2) {
                assert!(w[0] >= w[1] - 1e-9);
            }
        }
    }

    #[test]
    fn static_selectors_prefix_property() {
        let (items, users) = random_instance(42, 12, 5, 3);
        let full_norm = select_max_norm(&items, 12).unwrap();
        let full_ue = select_user_expectation(&users, &items, 12).unwrap();
        for m in 1..12 {
            let n = select_max_norm(&items, m).unwrap();
            assert_eq!(n.ranked(), &full_norm.ranked()[..m]);
            let ue = select_user_expectation(&users, &items, m).unwrap();
            assert_eq!(ue.ranked(), &full_ue.ranked()[..m]);
        }
    }
}
