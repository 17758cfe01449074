//! Gibbs sampler for tree stick-breaking mixtures of Gaussians.
//!
//! One sweep draws allocations given weights and kernels, then each internal
//! node's split coefficients through Pólya-Gamma augmentation, then the leaf
//! kernels from their Normal-Inverse-Wishart conditionals. Coarsening raises
//! the kernel likelihood to a power `zeta` in the allocation and kernel steps.

pub mod chain;
pub mod config;
pub mod cost;
pub mod niw;
pub mod sweep;
pub mod trace;

use crate::data_io::Dataset;
use crate::error::Result;
use crate::rng::{substream, Stream};
use crate::stick_breaking::{weights_for_covariate, SplitCoefficientSet, WeightVector};
use crate::tree::{NodeId, TreeTopology};

pub use chain::{initial_state, run_chain, sample_from_prior, resample_responses};
pub use config::{InitKind, Model, RunConfig, SigmaGamma};
pub use cost::{gibbs_cost_sum, lt_cost_bounds};
pub use niw::{Kernel, LeafStats, NiwPrior};
pub use sweep::{allocate_observations, gibbs_sweep, update_atoms, update_gamma_node};
pub use trace::{Draw, PosteriorTrace, TraceHeader, TraceWriter};

/// Sampler state after a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    /// Leaf index of each observation.
    pub allocations: Vec<usize>,
    /// One kernel per leaf.
    pub kernels: Vec<Kernel>,
    pub coeffs: SplitCoefficientSet,
    /// Pólya-Gamma auxiliaries `(observation, omega)` per internal node, from
    /// the node's most recent update.
    pub pg_aux: Vec<Vec<(u32, f64)>>,
}

impl MixtureState {
    pub fn allocation_ids(&self, tree: &TreeTopology) -> Vec<NodeId> {
        self.allocations.iter().map(|&a| tree.leaves()[a].clone()).collect()
    }

    pub fn weights_at(&self, tree: &TreeTopology, feats: &[f64]) -> Result<WeightVector> {
        weights_for_covariate(tree, &self.coeffs, feats)
    }

    /// Observation indices per leaf, in increasing order.
    pub fn leaf_members(&self, num_leaves: usize) -> Vec<Vec<u32>> {
        let mut members = vec![Vec::new(); num_leaves];
        for (i, &a) in self.allocations.iter().enumerate() {
            members[a].push(i as u32);
        }
        members
    }

    /// Weight vectors at every covariate profile of `data`.
    pub fn profile_weights(&self, tree: &TreeTopology, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        data.profiles()
            .iter()
            .map(|p| self.weights_at(tree, p).map(|w| w.0))
            .collect()
    }
}

/// Identifies one sweep of one chain; every random step derives its own
/// substream from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub chain: u64,
    pub sweep: u64,
}

impl StreamKey {
    pub fn new(seed: u64, chain: u64, sweep: u64) -> Self {
        Self { seed, chain, sweep }
    }

    pub fn stream(&self, subsystem: u64, unit: u64) -> Stream {
        substream(self.seed, &[self.chain, self.sweep, subsystem, unit])
    }
}
