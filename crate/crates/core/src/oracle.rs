//! Exact brute-force reference computations.
//!
//! Everything here is a full linear scan with the crate's deterministic
//! tie-break (ascending item index). The other modules are tested against
//! these results.

use rayon::prelude::*;

use crate::domain::{better_of, cmp_score_desc, inner_product, EmbeddingMatrix, SelectionResult};
use crate::error::{Error, Result};

/// Default cap on the number of subsets [`exhaustive_optimal`] will enumerate.
pub const DEFAULT_SUBSET_BUDGET: u128 = 2_000_000;

/// Top-k items for one user by exact scan, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopResult {
    pub user_index: usize,
    pub item_indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// The `k` items with the largest inner product against `u`, by full linear
/// scan. Ties break by ascending item index. Panics if `k` is out of range.
pub fn exact_top_k(u: &[f64], items: &EmbeddingMatrix, k: usize) -> TopResult {
    exact_top_k_as_user(0, u, items, k)
}

/// As [`exact_top_k`] but records which user the query vector belongs to.
pub fn exact_top_k_as_user(
    user_index: usize,
    u: &[f64],
    items: &EmbeddingMatrix,
    k: usize,
) -> TopResult {
    assert!(
        k >= 1 && k <= items.count(),
        "exact_top_k: k = {k} out of range 1..={}",
        items.count()
    );
    if k == 1 {
        let (value, idx) = argmax_item(u, items);
        return TopResult {
            user_index,
            item_indices: vec![idx],
            values: vec![value],
        };
    }
    let mut scored: Vec<(f64, usize)> = items
        .vectors()
        .enumerate()
        .map(|(i, x)| (inner_product(u, x), i))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, |a, b| cmp_score_desc(*a, *b));
        scored.truncate(k);
    }
    scored.sort_by(|a, b| cmp_score_desc(*a, *b));
    TopResult {
        user_index,
        item_indices: scored.iter().map(|&(_, i)| i).collect(),
        values: scored.iter().map(|&(v, _)| v).collect(),
    }
}

/// `(max value, argmax index)` of `u . x` over all items, index tie-break.
pub fn argmax_item(u: &[f64], items: &EmbeddingMatrix) -> (f64, usize) {
    assert!(!items.is_empty(), "argmax over empty item set");
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, x) in items.vectors().enumerate() {
        best = better_of(best, (inner_product(u, x), i));
    }
    best
}

/// Per-user global maxima over the full item set, computed once and shared.
#[derive(Debug, Clone)]
pub struct UserBest {
    /// `max_x u_w . x` for each user, in user index order.
    pub per_user: Vec<f64>,
    /// Sequential sum of `per_user`.
    pub total: f64,
}

/// Computes each user's best inner product over all items. User scans run in
/// parallel; the total is reduced sequentially in user order.
pub fn user_best(users: &EmbeddingMatrix, items: &EmbeddingMatrix) -> UserBest {
    let per_user: Vec<f64> = (0..users.count())
        .into_par_iter()
        .map(|w| argmax_item(users.vector(w), items).0)
        .collect();
    let total = per_user.iter().sum();
    UserBest { per_user, total }
}

/// The coverage objective `f(Y) = sum_u max_{y in Y} u . y`.
/// Panics on an empty subset (max over the empty set is undefined).
pub fn coverage_value(users: &EmbeddingMatrix, items: &EmbeddingMatrix, subset: &[usize]) -> f64 {
    assert!(!subset.is_empty(), "coverage_value: empty subset");
    let per_user: Vec<f64> = (0..users.count())
        .into_par_iter()
        .map(|w| best_in_subset(users.vector(w), items, subset))
        .collect();
    per_user.iter().sum()
}

#[inline]
fn best_in_subset(u: &[f64], items: &EmbeddingMatrix, subset: &[usize]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &i in subset {
        let v = inner_product(u, items.vector(i));
        if v > best {
            best = v;
        }
    }
    best
}

/// The favorite-item loss of a selection:
/// `sum_u [ max_x u . x - max_{y in Y} u . y ]`, by exact scans.
pub fn fav_loss(users: &EmbeddingMatrix, items: &EmbeddingMatrix, sel: &SelectionResult) -> f64 {
    fav_loss_with(&user_best(users, items), users, items, sel.ranked())
}

/// As [`fav_loss`] but reusing a precomputed [`UserBest`] cache.
pub fn fav_loss_with(
    best: &UserBest,
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    subset: &[usize],
) -> f64 {
    assert!(!subset.is_empty(), "fav_loss: empty selection");
    assert_eq!(best.per_user.len(), users.count());
    assert!(
        subset.iter().all(|&i| i < items.count()),
        "fav_loss: selection index out of range"
    );
    let per_user: Vec<f64> = (0..users.count())
        .into_par_iter()
        .map(|w| best.per_user[w] - best_in_subset(users.vector(w), items, subset))
        .collect();
    per_user.iter().sum()
}

/// Number of `m`-subsets of `n` elements, saturating at `u128::MAX`.
fn n_choose_m(n: usize, m: usize) -> u128 {
    if m > n {
        return 0;
    }
    let m = m.min(n - m);
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The exact optimum: the `m`-subset minimizing the favorite-item loss, found
/// by lexicographic enumeration with a running-best bound. Ties resolve to the
/// lexicographically smallest index set. Refuses instances whose subset count
/// exceeds `budget`.
pub fn exhaustive_optimal(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
    budget: u128,
) -> Result<(Vec<usize>, f64)> {
    let n = items.count();
    let w = users.count();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("m = {m} out of range 1..={n}")));
    }
    let needed = n_choose_m(n, m);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }

    // Cache the full score matrix; bounds below compare these exact values.
    let scores: Vec<Vec<f64>> = (0..w)
        .map(|u| {
            items
                .vectors()
                .map(|x| inner_product(users.vector(u), x))
                .collect()
        })
        .collect();
    // suffix_max[u][j] = max over items j.. of scores[u]
    let mut suffix_max = vec![vec![f64::NEG_INFINITY; n + 1]; w];
    for u in 0..w {
        for j in (0..n).rev() {
            suffix_max[u][j] = suffix_max[u][j + 1].max(scores[u][j]);
        }
    }
    let total_best: f64 = (0..w).map(|u| suffix_max[u][0]).sum();

    struct Search<'a> {
        scores: &'a [Vec<f64>],
        suffix_max: &'a [Vec<f64>],
        total_best: f64,
        n: usize,
        m: usize,
        best_loss: f64,
        best_subset: Vec<usize>,
        chosen: Vec<usize>,
    }

    impl Search<'_> {
        fn descend(&mut self, next: usize, best_per_user: &[f64]) {
            if self.chosen.len() == self.m {
                let f: f64 = best_per_user.iter().sum();
                let loss = self.total_best - f;
                // Strict improvement keeps the lexicographically first optimum.
                if loss < self.best_loss {
                    self.best_loss = loss;
                    self.best_subset = self.chosen.clone();
                }
                return;
            }
            let remaining = self.m - self.chosen.len();
            for j in next..=(self.n - remaining) {
                // Optimistic bound: every user gets its best among chosen + items j..
                let f_bound: f64 = best_per_user
                    .iter()
                    .enumerate()
                    .map(|(u, &b)| b.max(self.suffix_max[u][j]))
                    .sum();
                if self.total_best - f_bound >= self.best_loss {
                    continue;
                }
                let updated: Vec<f64> = best_per_user
                    .iter()
                    .enumerate()
                    .map(|(u, &b)| b.max(self.scores[u][j]))
                    .collect();
                self.chosen.push(j);
                self.descend(j + 1, &updated);
                self.chosen.pop();
            }
        }
    }

    let mut search = Search {
        scores: &scores,
        suffix_max: &suffix_max,
        total_best,
        n,
        m,
        best_loss: f64::INFINITY,
        best_subset: Vec::new(),
        chosen: Vec::with_capacity(m),
    };
    search.descend(0, &vec![f64::NEG_INFINITY; w]);
    debug_assert_eq!(search.best_subset.len(), m);
    Ok((search.best_subset, search.best_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Method;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(vecs: &[&[f64]]) -> EmbeddingMatrix {
        let dim = vecs[0].len();
        let ids = (0..vecs.len()).map(|i| format!("i{i}")).collect();
        EmbeddingMatrix::new(dim, ids, vecs.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    fn tri_items() -> EmbeddingMatrix {
        matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.6]])
    }

    fn two_users() -> EmbeddingMatrix {
        matrix(&[&[1.0, 0.0], &[0.0, 1.0]])
    }

    fn selection(items: &EmbeddingMatrix, ranked: Vec<usize>) -> SelectionResult {
        let scores = vec![0.0; ranked.len()];
        SelectionResult::new(Method::Exhaustive, ranked, scores, items).unwrap()
    }

    #[test]
    fn top_k_hand_cases() {
        let items = tri_items();
        let r = exact_top_k(&[1.0, 0.0], &items, 1);
        assert_eq!(r.item_indices, vec![0]);
        assert_eq!(r.values, vec![1.0]);

        let r = exact_top_k(&[0.0, 1.0], &items, 2);
        assert_eq!(r.item_indices, vec![1, 2]);
        assert_eq!(r.values, vec![1.0, 0.6]);

        let single = matrix(&[&[0.3, -0.2]]);
        let r = exact_top_k(&[-5.0, 2.0], &single, 1);
        assert_eq!(r.item_indices, vec![0]);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn top_k_rejects_large_k() {
        let items = tri_items();
        exact_top_k(&[1.0, 0.0], &items, 4);
    }

    #[test]
    fn fav_loss_hand_cases() {
        let items = tri_items();
        let users = two_users();
        // Y = X (as a ranking of all items) has zero loss.
        assert_eq!(fav_loss(&users, &items, &selection(&items, vec![0, 1, 2])), 0.0);
        // Y = {2}: (1 - 0.6) + (1 - 0.6)
        let loss = fav_loss(&users, &items, &selection(&items, vec![2]));
        assert!((loss - 0.8).abs() < 1e-12);
        // Y = {0}: 0 + (1 - 0)
        let loss = fav_loss(&users, &items, &selection(&items, vec![0]));
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_hand_cases() {
        let users = two_users();
        let items = tri_items();
        assert!((coverage_value(&users, &items, &[2]) - 1.2).abs() < 1e-12);
        assert_eq!(coverage_value(&users, &items, &[0, 1]), 2.0);

        let one_user = matrix(&[&[0.4, -0.3]]);
        let full: Vec<usize> = (0..items.count()).collect();
        let best = user_best(&one_user, &items);
        assert_eq!(coverage_value(&one_user, &items, &full), best.total);
    }

    #[test]
    fn exhaustive_hand_cases() {
        let users = two_users();
        let items = tri_items();
        let (set, loss) = exhaustive_optimal(&users, &items, 1, DEFAULT_SUBSET_BUDGET).unwrap();
        assert_eq!(set, vec![2]);
        assert!((loss - 0.8).abs() < 1e-12);

        let (set, loss) = exhaustive_optimal(&users, &items, 2, DEFAULT_SUBSET_BUDGET).unwrap();
        assert_eq!(set, vec![0, 1]);
        assert_eq!(loss, 0.0);

        let (set, loss) = exhaustive_optimal(&users, &items, 3, DEFAULT_SUBSET_BUDGET).unwrap();
        assert_eq!(set, vec![0, 1, 2]);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn exhaustive_refuses_over_budget() {
        let users = two_users();
        let items = tri_items();
        let err = exhaustive_optimal(&users, &items, 2, 2).unwrap_err();
        match err {
            Error::BudgetExceeded { needed, budget } => {
                assert_eq!(needed, 3);
                assert_eq!(budget, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err_to_string_names_budget());
    }

    fn err_to_string_names_budget() -> bool {
        let users = two_users();
        let items = tri_items();
        let msg = exhaustive_optimal(&users, &items, 2, 2)
            .unwrap_err()
            .to_string();
        msg.contains("budget") && msg.contains('2')
    }

    #[test]
    fn n_choose_m_values() {
        assert_eq!(n_choose_m(3, 2), 3);
        assert_eq!(n_choose_m(20, 4), 4845);
        assert_eq!(n_choose_m(2, 5), 0);
        assert_eq!(n_choose_m(200, 100), u128::MAX); // saturates
    }

    fn random_instance(seed: u64, n: usize, w: usize, dim: usize) -> (EmbeddingMatrix, EmbeddingMatrix) {
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
    fn loss_plus_coverage_is_total_best() {
        for seed in 0..50 {
            let (items, users) = random_instance(seed, 12, 8, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let m = rng.random_range(1..=items.count());
            let mut subset: Vec<usize> = (0..items.count()).collect();
            for i in (1..subset.len()).rev() {
                let j = rng.random_range(0..=i);
                subset.swap(i, j);
            }
            subset.truncate(m);
            let best = user_best(&users, &items);
            let f = coverage_value(&users, &items, &subset);
            let loss = fav_loss_with(&best, &users, &items, &subset);
            assert!((loss + f - best.total).abs() < 1e-9);
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn nested_selections_monotone() {
        for seed in 0..30 {
            let (items, users) = random_instance(seed + 100, 10, 6, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..items.count()).collect();
            for i in (1..perm.len()).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let small = rng.random_range(1..items.count());
            let big = rng.random_range(small..=items.count());
            let y = &perm[..small];
            let z = &perm[..big];
            let best = user_best(&users, &items);
            assert!(
                fav_loss_with(&best, &users, &items, z)
                    <= fav_loss_with(&best, &users, &items, y) + 1e-12
            );
        }
    }

    proptest! {
        #[test]
        fn submodularity_spot_check(seed in 0u64..500) {
            let (items, users) = random_instance(seed, 9, 5, 3);
            let n = items.count();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55aa);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            // y subset of z, i outside z
            let z_len = rng.random_range(1..n);
            let y_len = rng.random_range(1..=z_len);
            let y = &perm[..y_len];
            let z = &perm[..z_len];
            let extra = perm[z_len];
            let gain = |base: &[usize]| {
                let mut with: Vec<usize> = base.to_vec();
                with.push(extra);
                coverage_value(&users, &items, &with) - coverage_value(&users, &items, base)
            };
            prop_assert!(gain(y) >= gain(z) - 1e-9);
            // monotonicity
            prop_assert!(
                coverage_value(&users, &items, y) <= coverage_value(&users, &items, z) + 1e-9
            );
        }
    }

    #[test]
    fn zero_loss_iff_covers_every_user_argmax() {
        let (items, users) = random_instance(7, 8, 5, 2);
        let best = user_best(&users, &items);
        // The set of per-user argmax items has zero loss.
        let mut argmaxes: Vec<usize> = (0..users.count())
            .map(|w| argmax_item(users.vector(w), &items).1)
            .collect();
        argmaxes.sort_unstable();
        argmaxes.dedup();
        assert_eq!(fav_loss_with(&best, &users, &items, &argmaxes), 0.0);
        // Dropping coverage of some user's unique argmax makes the loss positive
        // whenever no remaining item ties that user's best value.
        let victim = argmaxes[0];
        let rest: Vec<usize> = (0..items.count()).filter(|&i| i != victim).collect();
        let loss = fav_loss_with(&best, &users, &items, &rest);
        let still_covered = (0..users.count()).all(|w| {
            rest.iter()
                .any(|&i| inner_product(users.vector(w), items.vector(i)) >= best.per_user[w])
        });
        assert_eq!(loss == 0.0, still_covered);
    }
}
