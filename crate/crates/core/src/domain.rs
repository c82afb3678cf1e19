//! Shared value types and numeric conventions.
//!
//! All arithmetic is 64-bit floating point with a fixed, sequential summation
//! order so that every score is bit-stable across runs and thread counts.
//! Internal 0-based indices are the working representation everywhere;
//! external string ids appear only at I/O boundaries.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inner product of two equal-length vectors, summed sequentially by index.
///
/// Panics on a length mismatch; callers hold dimensions by construction.
#[inline]
pub fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(
        a.len(),
        b.len(),
        "inner_product: dimension mismatch ({} vs {})",
        a.len(),
        b.len()
    );
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Euclidean norm, `sqrt(inner_product(a, a))`.
#[inline]
pub fn norm(a: &[f64]) -> f64 {
    inner_product(a, a).sqrt()
}

/// Descending by score with ties broken by ascending index.
///
/// `0.0` and `-0.0` compare equal so the index tie-break applies; scores are
/// finite by the embedding invariants, so `partial_cmp` never sees NaN in
/// practice (NaN is treated as a tie for robustness).
#[inline]
pub fn cmp_score_desc(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Of two `(score, index)` pairs, the one ranked first by [`cmp_score_desc`].
#[inline]
pub fn better_of(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if cmp_score_desc(a, b) == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Indices `0..scores.len()` sorted by score descending, index ascending on ties.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| cmp_score_desc((scores[a], a), (scores[b], b)));
    idx
}

/// A dense matrix of `count` fixed-dimension embedding vectors with stable
/// external ids. Row-major storage; immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
    id_index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    /// Builds a matrix, validating that every vector has exactly `dim` finite
    /// components and that ids are unique, non-empty and free of separators.
    pub fn new(dim: usize, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if ids.len() != vectors.len() {
            return Err(Error::invalid(format!(
                "id/vector count mismatch: {} ids, {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let mut data = Vec::with_capacity(dim * vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite component {bad} in vector {i}"
                )));
            }
            data.extend_from_slice(v);
        }
        Self::from_flat(dim, ids, data)
    }

    /// As [`EmbeddingMatrix::new`] but from row-major flat storage.
    pub fn from_flat(dim: usize, ids: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != dim * ids.len() {
            return Err(Error::invalid(format!(
                "flat data length {} does not equal count {} x dim {}",
                data.len(),
                ids.len(),
                dim
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite component in embedding data"));
        }
        let mut id_index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains(char::is_whitespace) || id.contains(',') {
                return Err(Error::invalid(format!(
                    "id {id:?} is empty or contains whitespace/comma"
                )));
            }
            if id_index.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate id {id:?}")));
            }
        }
        Ok(Self {
            dim,
            ids,
            data,
            id_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Euclidean norms of all rows, in index order.
    pub fn norms(&self) -> Vec<f64> {
        self.vectors().map(norm).collect()
    }
}

/// The problem container: items, warm users and the subset size `m`.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    pub items: EmbeddingMatrix,
    pub users: EmbeddingMatrix,
    pub m: usize,
}

impl SelectionProblem {
    pub fn new(items: EmbeddingMatrix, users: EmbeddingMatrix, m: usize) -> Result<Self> {
        if items.dim() != users.dim() {
            return Err(Error::DimensionMismatch {
                expected: items.dim(),
                got: users.dim(),
            });
        }
        if m == 0 || m > items.count() {
            return Err(Error::invalid(format!(
                "subset size m = {m} out of range 1..={}",
                items.count()
            )));
        }
        Ok(Self { items, users, m })
    }
}

/// The selection method that produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MaxNorm,
    MaxInDegree,
    UserExpectation,
    Ipgs,
    IpgsExact,
    Greedy,
    GreedyLazy,
    Hull,
    Exhaustive,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::MaxNorm,
        Method::MaxInDegree,
        Method::UserExpectation,
        Method::Ipgs,
        Method::IpgsExact,
        Method::Greedy,
        Method::GreedyLazy,
        Method::Hull,
        Method::Exhaustive,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::MaxNorm => "max-norm",
            Method::MaxInDegree => "max-in-degree",
            Method::UserExpectation => "user-expectation",
            Method::Ipgs => "ipgs",
            Method::IpgsExact => "ipgs-exact",
            Method::Greedy => "greedy",
            Method::GreedyLazy => "greedy-lazy",
            Method::Hull => "hull",
            Method::Exhaustive => "exhaustive",
        }
    }

    /// Methods whose result ranking is insertion order rather than a
    /// non-increasing static score (the greedy family).
    pub fn insertion_ordered(&self) -> bool {
        matches!(
            self,
            Method::Greedy | Method::GreedyLazy | Method::Hull | Method::Exhaustive
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// A ranked size-`m` item subset with the method-specific ranking key per item.
///
/// Ranked entries are internal item indices; use
/// [`SelectionResult::external_ids`] at I/O boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub method: Method,
    ranked: Vec<usize>,
    scores: Vec<f64>,
}

impl SelectionResult {
    /// Validates length agreement, duplicate-freedom and index range.
    /// For static-ranking methods the scores must be non-increasing.
    pub fn new(
        method: Method,
        ranked: Vec<usize>,
        scores: Vec<f64>,
        items: &EmbeddingMatrix,
    ) -> Result<Self> {
        if ranked.is_empty() {
            return Err(Error::invalid("selection must contain at least one item"));
        }
        if ranked.len() != scores.len() {
            return Err(Error::invalid(format!(
                "ranked/score length mismatch: {} vs {}",
                ranked.len(),
                scores.len()
            )));
        }
        if let Some(&bad) = ranked.iter().find(|&&i| i >= items.count()) {
            return Err(Error::invalid(format!(
                "item index {bad} out of range (N = {})",
                items.count()
            )));
        }
        let mut seen = vec![false; items.count()];
        for &i in &ranked {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("duplicate item index {i}")));
            }
        }
        if !method.insertion_ordered() {
            debug_assert!(
                scores.windows(2).all(|w| w[0] >= w[1]),
                "{method}: scores must be non-increasing"
            );
        }
        Ok(Self {
            method,
            ranked,
            scores,
        })
    }

    pub fn m(&self) -> usize {
        self.ranked.len()
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// External ids in rank order, resolved against the source item matrix.
    pub fn external_ids<'a>(&self, items: &'a EmbeddingMatrix) -> Vec<&'a str> {
        self.ranked.iter().map(|&i| items.id(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(vecs: &[&[f64]]) -> EmbeddingMatrix {
        let dim = vecs[0].len();
        let ids = (0..vecs.len()).map(|i| format!("i{i}")).collect();
        EmbeddingMatrix::new(dim, ids, vecs.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    #[test]
    fn inner_product_orthogonal() {
        assert_eq!(inner_product(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn inner_product_hand_case() {
        assert_eq!(inner_product(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
    }

    #[test]
    fn inner_product_squared_norm() {
        assert_eq!(inner_product(&[3.0, 4.0], &[3.0, 4.0]), 25.0);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn inner_product_dimension_mismatch_panics() {
        inner_product(&[1.0], &[1.0, 2.0]);
    }

    #[test]
    fn norm_cases() {
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(norm(&[0.0, 0.0]), 0.0);
        assert_eq!(norm(&[1.0, 1.0, 1.0, 1.0]), 2.0);
    }

    #[test]
    fn matrix_rejects_duplicate_ids() {
        let err = EmbeddingMatrix::new(
            1,
            vec!["a".into(), "a".into()],
            vec![vec![1.0], vec![2.0]],
        )
        .unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn matrix_rejects_non_finite() {
        let err =
            EmbeddingMatrix::new(1, vec!["a".into()], vec![vec![f64::NAN]]).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn matrix_rejects_dim_mismatch() {
        let err =
            EmbeddingMatrix::new(2, vec!["a".into()], vec![vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn problem_validates_bounds() {
        let items = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let users = matrix(&[&[1.0, 1.0]]);
        assert!(SelectionProblem::new(items.clone(), users.clone(), 0).is_err());
        assert!(SelectionProblem::new(items.clone(), users.clone(), 3).is_err());
        assert!(SelectionProblem::new(items, users, 2).is_ok());
    }

    #[test]
    fn selection_rejects_duplicates_and_range() {
        let items = matrix(&[&[1.0], &[2.0]]);
        assert!(SelectionResult::new(Method::MaxNorm, vec![0, 0], vec![1.0, 1.0], &items).is_err());
        assert!(SelectionResult::new(Method::MaxNorm, vec![5], vec![1.0], &items).is_err());
        assert!(SelectionResult::new(Method::MaxNorm, vec![1], vec![1.0, 2.0], &items).is_err());
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn rank_desc_breaks_ties_by_index() {
        assert_eq!(rank_desc(&[1.0, 2.0, 2.0, 0.5]), vec![1, 2, 0, 3]);
        assert_eq!(rank_desc(&[0.0, -0.0, 0.0]), vec![0, 1, 2]);
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, dim)
    }

    proptest! {
        #[test]
        fn inner_product_symmetric(a in vec_strategy(8), b in vec_strategy(8)) {
            let ab = inner_product(&a, &b);
            let ba = inner_product(&b, &a);
            let scale = ab.abs().max(ba.abs()).max(1.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * scale);
        }

        #[test]
        fn inner_product_bilinear(
            a in vec_strategy(8),
            b in vec_strategy(8),
            c in vec_strategy(8),
            alpha in -10.0f64..10.0,
        ) {
            // <alpha a + b, c> == alpha <a,c> + <b,c>, relative to the term magnitudes
            let lhs_vec: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
            let lhs = inner_product(&lhs_vec, &c);
            let rhs = alpha * inner_product(&a, &c) + inner_product(&b, &c);
            let dot_abs = |x: &[f64], y: &[f64]| -> f64 {
                x.iter().zip(y).map(|(p, q)| (p * q).abs()).sum()
            };
            let scale = (alpha.abs() * dot_abs(&a, &c) + dot_abs(&b, &c)).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn norm_squared_is_self_inner_product(a in vec_strategy(8)) {
            let n = norm(&a);
            let ip = inner_product(&a, &a);
            let scale = ip.abs().max(1.0);
            prop_assert!((n * n - ip).abs() <= 1e-12 * scale);
        }
    }
}
