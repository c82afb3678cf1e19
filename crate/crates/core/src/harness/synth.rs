//! Synthetic instance generation: Gaussian-mixture users and items sharing
//! one set of cluster centers, with an optional log-normal norm multiplier on
//! the items to emulate skewed norm distributions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Gaussian-mixture shape: `clusters` centers drawn from
/// `center_scale * N(0, I)`, members scattered `spread * N(0, I)` around a
/// uniformly chosen center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub clusters: usize,
    pub center_scale: f64,
    pub spread: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            clusters: 4,
            center_scale: 1.0,
            spread: 0.4,
        }
    }
}

/// Log-normal norm multiplier applied to items: `exp(sigma * z)` with
/// `z ~ N(0,1)`. `sigma = 0` leaves norms untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSkewSpec {
    pub sigma: f64,
}

impl Default for NormSkewSpec {
    fn default() -> Self {
        Self { sigma: 0.0 }
    }
}

/// Generates `(items, users)` from one seeded stream. Draw order is fixed:
/// cluster centers, then items (cluster choice, offsets, skew multiplier per
/// item), then users (cluster choice, offsets). Users carry no norm skew;
/// the skew emulates an item-popularity effect.
pub fn gen_synthetic(
    n_items: usize,
    n_users: usize,
    dim: usize,
    mixture: &MixtureSpec,
    skew: &NormSkewSpec,
    seed: u64,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    if n_items == 0 || n_users == 0 || dim == 0 {
        return Err(Error::invalid("sizes and dimension must be positive"));
    }
    if mixture.clusters == 0 {
        return Err(Error::invalid("mixture needs at least one cluster"));
    }
    if !(mixture.spread >= 0.0) || !(mixture.center_scale >= 0.0) || !(skew.sigma >= 0.0) {
        return Err(Error::invalid("mixture and skew parameters must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    let centers: Vec<Vec<f64>> = (0..mixture.clusters)
        .map(|_| {
            (0..dim)
                .map(|_| mixture.center_scale * gauss(&mut rng))
                .collect()
        })
        .collect();

    let draw_member = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let c = &centers[rng.random_range(0..mixture.clusters)];
        (0..dim).map(|d| c[d] + mixture.spread * gauss(rng)).collect()
    };

    let mut item_data = Vec::with_capacity(n_items * dim);
    for _ in 0..n_items {
        let mut v = draw_member(&mut rng);
        let multiplier = (skew.sigma * gauss(&mut rng)).exp();
        for x in &mut v {
            *x *= multiplier;
        }
        item_data.extend_from_slice(&v);
    }
    let items = EmbeddingMatrix::from_flat(
        dim,
        (0..n_items).map(|i| format!("i{i}")).collect(),
        item_data,
    )?;

    let mut user_data = Vec::with_capacity(n_users * dim);
    for _ in 0..n_users {
        user_data.extend_from_slice(&draw_member(&mut rng));
    }
    let users = EmbeddingMatrix::from_flat(
        dim,
        (0..n_users).map(|i| format!("u{i}")).collect(),
        user_data,
    )?;
    Ok((items, users))
}
