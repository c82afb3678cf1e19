//! Item-subset selection for user cold-start recommendation.
//!
//! Given latent vectors for warm users and items, pick a size-M item subset
//! that minimizes the aggregate favorite-item loss: the summed gap, over
//! users, between each user's best item overall and its best item inside the
//! subset. The crate provides:
//!
//! - [`oracle`]: exact reference computations (per-user MIPS, the loss and
//!   its coverage complement, exhaustive optima on tiny instances);
//! - [`selectors`]: largest-norm, mean-user, and greedy coverage selection;
//! - [`ipgraph`]: inner-product proximity graphs (exact and NSW-style
//!   approximate) with in-degree and per-user-vote selection built on them;
//! - [`hull`]: extreme-point extraction by support-direction sampling and the
//!   exact 2-D hull used as a test oracle;
//! - [`metrics`]: Precision@M / MAP@M / NDCG@M and norm-bias diagnostics;
//! - [`harness`]: ratings ingestion, warm/cold splitting, a small ALS
//!   trainer, cold-user ridge fitting, synthetic instance generation, and the
//!   experiment runner with CSV/JSON reports.
//!
//! All scores are computed in f64 with fixed summation order; every ranking
//! breaks ties by ascending internal index, so results are bit-reproducible
//! across runs and thread counts.

pub mod domain;
pub mod error;
pub mod harness;
pub mod hull;
pub mod ipgraph;
pub mod metrics;
pub mod oracle;
pub mod selectors;

pub use domain::{inner_product, norm, EmbeddingMatrix, Method, SelectionProblem, SelectionResult};
pub use error::{Error, Result};
