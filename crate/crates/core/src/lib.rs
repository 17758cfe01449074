//! Covariate-dependent mixture models with tree stick-breaking priors.
//!
//! Leaf weights come from binary trees (lopsided or balanced) whose splitting
//! variables follow a logit-normal regression on covariate features. The
//! crate provides the weight construction, closed-form and Monte-Carlo prior
//! moments, a Pólya-Gamma sampler, a Gibbs sampler for Gaussian-kernel
//! mixtures, post-processing diagnostics and synthetic data generation.

pub mod data_io;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod polya_gamma;
pub mod prior_moments;
pub mod rng;
pub mod stats;
pub mod stick_breaking;
pub mod tree;

pub use error::{Error, Result};
pub use tree::{NodeId, TreeKind, TreeTopology};
