//! Treatment and spillover effect estimation on a single observed network.
//!
//! The crate bundles everything needed to go from a network and unit-level
//! data to a doubly robust estimate with network HAC inference:
//!
//! * [`graph`]: undirected graphs, random graph models, path-distance statistics.
//! * [`dgp`]: the binary-game selection and linear-in-means outcome simulators.
//! * [`exposure`]: interval exposure mappings `1{D_i = d, treated nbrs ∈ Δ, degree ∈ Γ}`.
//! * [`autodiff`]: a small matrix-valued reverse-mode AD tape with Adam.
//! * [`gnn`]: message-passing networks (GCN, sum-MLP, PNA) and their training.
//! * [`estimator`]: nuisance fitting, the doubly robust estimator, HAC variance.
//! * [`glm`]: polynomial-sieve GLM baselines on hand-selected controls.
//! * [`oracle`]: exact enumeration on tiny discrete models.
//! * [`wl`]: 1-WL color refinement.
//! * [`harness`]: configuration-driven Monte Carlo experiments.

pub mod autodiff;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod exposure;
pub mod glm;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod wl;

pub use error::{Error, Result};
pub use graph::Graph;
