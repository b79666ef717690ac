//! Lower-bound machinery for sparse linear prediction on weighted graph models.
//!
//! The crate builds the explicit graph family behind the weighted-graph-model
//! sample-complexity lower bounds, counts the restricted signal ensembles
//! defined on it, evaluates the information-theoretic quantities that turn
//! those counts into error floors (pairwise Gaussian KL divergences, mutual
//! information ceilings, Fano floors, sample thresholds), and checks the
//! floors empirically with a seeded Monte Carlo simulator of
//! `z = f(X * beta + e)` for both regression (`f = id`) and 1-bit sign
//! observations.
//!
//! Modules:
//! - [`graph`]: weighted graphs, weight-degree, support membership and
//!   enumeration for the `(G, s, g, B)` support family.
//! - [`construction`]: the explicit lower-bound graph builder with its
//!   parameter requirements, support enumeration, and count bounds.
//! - [`ensemble`]: restricted signal ensembles (two-valued noisy entries or
//!   `{-1, +1}` noiseless entries) with uniform sampling and text
//!   serialization.
//! - [`info`]: KL divergences, mutual-information bounds, Fano error floors,
//!   sample thresholds, and tree/block sparsity counts.
//! - [`concentration`]: numerical checks of the minimum-distance and
//!   chi-square tail facts plus the scalar inequalities behind them.
//! - [`sim`]: the observation-model simulator, decoders, and experiment
//!   runner with CSV/JSON summaries.
//! - [`rng`]: counter-style derivation of per-trial random streams from a
//!   master seed.

pub mod concentration;
pub mod construction;
pub mod ensemble;
pub mod graph;
pub mod info;
pub mod rng;
pub mod sim;

/// Library version, echoed into experiment summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
