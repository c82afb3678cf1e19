//! Minimal regularized alternating-least-squares trainer and the ridge
//! cold-user fit against fixed item vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::domain::{inner_product, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::harness::ratings::{RatingTriple, RatingsTable};

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch: usize,
    /// RMSE over the observed ratings.
    pub rmse: f64,
    /// The regularized objective: squared error plus lambda times the squared
    /// norms of all factors. Non-increasing per half-sweep by construction.
    pub objective: f64,
}

/// Cholesky factorization of a symmetric positive definite matrix stored
/// row-major; solves the D x D normal equations of each ridge subproblem.
struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &[f64], dim: usize) -> Result<Self> {
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = a[i * dim + j];
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Singular(format!(
                            "non-positive pivot {sum} at row {i}; increase lambda"
                        )));
                    }
                    l[i * dim + j] = sum.sqrt();
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        Ok(Self { dim, lower: l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let l = &self.lower;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut sum = b[i];
            for k in 0..i {
                sum -= l[i * d + k] * y[k];
            }
            y[i] = sum / l[i * d + i];
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut sum = y[i];
            for k in i + 1..d {
                sum -= l[k * d + i] * x[k];
            }
            x[i] = sum / l[i * d + i];
        }
        x
    }
}

/// Ridge solution `argmin_v sum (r - v . x)^2 + lambda |v|^2` over the given
/// (vector, rating) observations.
fn ridge_solve(
    dim: usize,
    lambda: f64,
    observations: impl Iterator<Item = (usize, f64)> + Clone,
    fixed: &EmbeddingMatrix,
) -> Result<Vec<f64>> {
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for i in 0..dim {
        a[i * dim + i] = lambda;
    }
    for (row, rating) in observations {
        let x = fixed.vector(row);
        for i in 0..dim {
            b[i] += rating * x[i];
            for j in 0..=i {
                a[i * dim + j] += x[i] * x[j];
            }
        }
    }
    // Mirror the lower triangle.
    for i in 0..dim {
        for j in i + 1..dim {
            a[i * dim + j] = a[j * dim + i];
        }
    }
    Ok(Cholesky::factor(&a, dim)?.solve(&b))
}

fn seeded_gaussian_matrix(
    rng: &mut ChaCha8Rng,
    count: usize,
    dim: usize,
    ids: Vec<String>,
) -> EmbeddingMatrix {
    let scale = 1.0 / (dim as f64).sqrt();
    let data: Vec<f64> = (0..count * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect();
    EmbeddingMatrix::from_flat(dim, ids, data).expect("generated data is finite")
}

fn rmse_and_objective(
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    triples: &[RatingTriple],
    lambda: f64,
) -> (f64, f64) {
    let sq_err: f64 = triples
        .iter()
        .map(|t| {
            let e = t.rating - inner_product(users.vector(t.user), items.vector(t.item));
            e * e
        })
        .sum();
    let norms_sq = |m: &EmbeddingMatrix| -> f64 { m.vectors().map(|v| inner_product(v, v)).sum() };
    let objective = sq_err + lambda * (norms_sq(users) + norms_sq(items));
    ((sq_err / triples.len() as f64).sqrt(), objective)
}

/// Regularized ALS on the observed ratings: alternately re-solves every item
/// vector (against fixed users), then every user vector (against fixed
/// items), each as an exact ridge regression. Users close each epoch, so the
/// returned user vectors are exact ridge solutions against the returned item
/// matrix. Factors start from a seeded Gaussian init scaled by `1/sqrt(dim)`
/// (users drawn first, then items). `epochs = 0` returns the raw init.
/// Returns the factor matrices and the per-epoch training log (RMSE is
/// logged at debug level).
pub fn train_mf(
    warm: &RatingsTable,
    dim: usize,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix, Vec<TrainLog>)> {
    if warm.n_ratings() == 0 {
        return Err(Error::invalid("cannot train on an empty ratings table"));
    }
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = seeded_gaussian_matrix(&mut rng, warm.n_users(), dim, warm.user_ids().to_vec());
    let mut items = seeded_gaussian_matrix(&mut rng, warm.n_items(), dim, warm.item_ids().to_vec());

    let by_user = warm.by_user();
    let by_item = warm.by_item();
    let mut log = Vec::with_capacity(epochs);

    for epoch in 1..=epochs {
        let item_rows: Vec<Vec<f64>> = by_item
            .par_iter()
            .map(|obs| {
                ridge_solve(
                    dim,
                    lambda,
                    obs.iter().map(|t| (t.user, t.rating)),
                    &users,
                )
            })
            .collect::<Result<_>>()?;
        items = EmbeddingMatrix::new(dim, warm.item_ids().to_vec(), item_rows)?;

        let user_rows: Vec<Vec<f64>> = by_user
            .par_iter()
            .map(|obs| {
                ridge_solve(
                    dim,
                    lambda,
                    obs.iter().map(|t| (t.item, t.rating)),
                    &items,
                )
            })
            .collect::<Result<_>>()?;
        users = EmbeddingMatrix::new(dim, warm.user_ids().to_vec(), user_rows)?;

        let (rmse, objective) = rmse_and_objective(&users, &items, warm.triples(), lambda);
        log::debug!("als epoch {epoch}: rmse {rmse:.6e}, objective {objective:.6e}");
        log.push(TrainLog {
            epoch,
            rmse,
            objective,
        });
    }
    if let Some(last) = log.last() {
        log::info!(
            "als finished after {} epoch(s): rmse {:.6e}",
            last.epoch,
            last.rmse
        );
    }
    Ok((users, items, log))
}

/// Cold-user fit result: the fitted vectors plus a tally of users that had no
/// usable ratings (those get the zero vector).
#[derive(Debug, Clone)]
pub struct ColdFit {
    pub users: EmbeddingMatrix,
    pub empty_users: usize,
}

/// Per-user ridge fit against fixed item vectors:
/// `q = argmin sum_(i rated) (r_ui - q . x_i)^2 + lambda |q|^2`.
///
/// Every rating must reference an item known to `items` (matched by external
/// id). Users without any ratings get the zero vector and are tallied.
pub fn fit_cold_users(
    cold: &RatingsTable,
    items: &EmbeddingMatrix,
    lambda: f64,
) -> Result<ColdFit> {
    let mut item_map = Vec::with_capacity(cold.n_items());
    for id in cold.item_ids() {
        match items.index_of(id) {
            Some(idx) => item_map.push(idx),
            None => {
                return Err(Error::invalid(format!(
                    "cold rating references item {id:?} absent from the item matrix"
                )))
            }
        }
    }
    let dim = items.dim();
    let by_user = cold.by_user();
    let rows: Vec<Vec<f64>> = by_user
        .par_iter()
        .map(|obs| {
            if obs.is_empty() {
                return Ok(vec![0.0; dim]);
            }
            ridge_solve(
                dim,
                lambda,
                obs.iter().map(|t| (item_map[t.item], t.rating)),
                items,
            )
        })
        .collect::<Result<_>>()?;
    let empty_users = by_user.iter().filter(|obs| obs.is_empty()).count();
    if empty_users > 0 {
        log::warn!("{empty_users} cold user(s) had no usable ratings; fitted as zero vectors");
    }
    let users = EmbeddingMatrix::new(dim, cold.user_ids().to_vec(), rows)?;
    Ok(ColdFit { users, empty_users })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rank_one_synthetic_recovers_ratings() {
        // r_ui = a_u * b_i is exactly representable at dim = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(0.5..2.0)).collect();
        let b: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..2.0)).collect();
        let mut rows = Vec::new();
        for (u, &au) in a.iter().enumerate() {
            for (i, &bi) in b.iter().enumerate() {
                if (u + i) % 3 != 0 {
                    rows.push((format!("u{u}"), format!("i{i}"), au * bi));
                }
            }
        }
        let rows_ref: Vec<(&str, &str, f64)> =
            rows.iter().map(|(u, i, r)| (u.as_str(), i.as_str(), *r)).collect();
        let table = RatingsTable::from_rows(&rows_ref).unwrap();
        let (_, _, log) = train_mf(&table, 1, 1e-6, 30, 7).unwrap();
        assert!(log.last().unwrap().rmse < 1e-3, "rmse {}", log.last().unwrap().rmse);
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let table = RatingsTable::from_rows(&[("u1", "i1", 3.0), ("u2", "i1", 1.0)]).unwrap();
        let (u1, x1, log) = train_mf(&table, 4, 0.1, 0, 11).unwrap();
        let (u2, x2, _) = train_mf(&table, 4, 0.1, 0, 11).unwrap();
        assert!(log.is_empty());
        assert_eq!(u1, u2);
        assert_eq!(x1, x2);
        // Init scale: components are N(0, 1/dim); spot check they are small.
        assert!(u1.vectors().flat_map(|v| v.iter()).all(|x| x.abs() < 3.0));
    }

    #[test]
    fn objective_is_monotone_and_rmse_settles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for u in 0..12 {
            for i in 0..9 {
                if rng.random_range(0.0..1.0) < 0.7 {
                    rows.push((format!("u{u}"), format!("i{i}"), rng.random_range(1.0..5.0)));
                }
            }
        }
        let rows_ref: Vec<(&str, &str, f64)> =
            rows.iter().map(|(u, i, r)| (u.as_str(), i.as_str(), *r)).collect();
        let table = RatingsTable::from_rows(&rows_ref).unwrap();
        let (_, _, log) = train_mf(&table, 3, 0.1, 15, 3).unwrap();
        for w in log.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-9,
                "objective rose: {} -> {}",
                w[0].objective,
                w[1].objective
            );
            assert!(
                w[1].rmse <= w[0].rmse + 1e-9,
                "rmse rose: {} -> {}",
                w[0].rmse,
                w[1].rmse
            );
        }
    }

    #[test]
    fn lambda_zero_on_deficient_data_is_singular() {
        // A user with no observations has all-zero normal equations, which
        // only regularization can make invertible.
        let table = RatingsTable::from_parts(
            vec!["u1".into(), "u2".into()],
            vec!["i1".into()],
            vec![(0, 0, 3.0)],
        )
        .unwrap();
        let err = train_mf(&table, 2, 0.0, 5, 1).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(train_mf(&table, 2, 0.1, 5, 1).is_ok());
    }

    #[test]
    fn cold_fit_single_rating_closed_form() {
        // dim 1, single rating r on an item with scalar x, lambda 0: q = r / x.
        let items = EmbeddingMatrix::new(1, vec!["i1".into()], vec![vec![2.0]]).unwrap();
        let cold = RatingsTable::from_rows(&[("c1", "i1", 3.0)]).unwrap();
        let fit = fit_cold_users(&cold, &items, 0.0).unwrap();
        assert!((fit.users.vector(0)[0] - 1.5).abs() < 1e-12);
        assert_eq!(fit.empty_users, 0);
    }

    #[test]
    fn cold_fit_matches_equivalent_warm_user() {
        // A cold user repeating a warm user's ratings must land on (almost)
        // the same vector: users close each ALS epoch, so the warm vector is
        // itself the ridge solution against the final item matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut rows = Vec::new();
        for u in 0..6 {
            for i in 0..8 {
                rows.push((format!("u{u}"), format!("i{i}"), rng.random_range(1.0..5.0)));
            }
        }
        let rows_ref: Vec<(&str, &str, f64)> =
            rows.iter().map(|(u, i, r)| (u.as_str(), i.as_str(), *r)).collect();
        let table = RatingsTable::from_rows(&rows_ref).unwrap();
        let lambda = 0.1;
        let (users, items, _) = train_mf(&table, 2, lambda, 30, 9).unwrap();

        let twin_rows: Vec<(&str, &str, f64)> = rows_ref
            .iter()
            .filter(|(u, _, _)| *u == "u3")
            .map(|&(_, i, r)| ("twin", i, r))
            .collect();
        let cold = RatingsTable::from_rows(&twin_rows).unwrap();
        let fit = fit_cold_users(&cold, &items, lambda).unwrap();
        let warm_idx = users.index_of("u3").unwrap();
        for (a, b) in fit.users.vector(0).iter().zip(users.vector(warm_idx)) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn cold_fit_strong_regularization_shrinks_to_zero() {
        let items = EmbeddingMatrix::new(1, vec!["i1".into()], vec![vec![1.0]]).unwrap();
        let cold = RatingsTable::from_rows(&[("c1", "i1", 4.0)]).unwrap();
        let fit = fit_cold_users(&cold, &items, 1e12).unwrap();
        assert!(fit.users.vector(0)[0].abs() < 1e-10);
    }

    #[test]
    fn cold_fit_rejects_unknown_items() {
        let items = EmbeddingMatrix::new(1, vec!["i1".into()], vec![vec![1.0]]).unwrap();
        let cold = RatingsTable::from_rows(&[("c1", "i9", 4.0)]).unwrap();
        assert!(fit_cold_users(&cold, &items, 0.1).is_err());
    }

    #[test]
    fn cold_fit_tallies_zero_rating_users() {
        let items = EmbeddingMatrix::new(1, vec!["i1".into()], vec![vec![1.0]]).unwrap();
        let cold = RatingsTable::from_parts(
            vec!["c1".into(), "c2".into()],
            vec!["i1".into()],
            vec![(0, 0, 4.0)],
        )
        .unwrap();
        let fit = fit_cold_users(&cold, &items, 0.1).unwrap();
        assert_eq!(fit.empty_users, 1);
        assert_eq!(fit.users.vector(1), &[0.0]);
    }
}
