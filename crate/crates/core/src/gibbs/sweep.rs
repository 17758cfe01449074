//! The three conditional updates and their composition into one sweep.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;

use super::config::Model;
use super::niw::{Kernel, LeafStats};
use super::{MixtureState, StreamKey};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::polya_gamma::sample_pg1;
use crate::rng::tag;
use crate::stick_breaking::{dot, log_weights_from_eta, GammaPrior};
use crate::tree::TreeTopology;

/// Observations per allocation work unit.
pub const ALLOCATION_CHUNK: usize = 512;

/// Log leaf weights at every covariate profile.
fn profile_log_weights(tree: &TreeTopology, state: &MixtureState, data: &Dataset) -> Vec<Vec<f64>> {
    let mut eta = Vec::with_capacity(tree.num_internal());
    data.profiles()
        .iter()
        .map(|p| {
            state.coeffs.linear_predictors(p, &mut eta);
            let mut lw = vec![0.0; tree.num_leaves()];
            log_weights_from_eta(tree, &eta, &mut lw);
            lw
        })
        .collect()
}

/// Draws every allocation from its full conditional, proportional to
/// `W_x,e * h(y; theta_e)^zeta`, by Gumbel-max in log space.
pub fn allocate_observations(
    state: &mut MixtureState,
    model: &Model,
    data: &Dataset,
    key: StreamKey,
) -> Result<()> {
    let tree = &model.tree;
    let n = data.n();
    state.allocations.resize(n, 0);
    if tree.num_leaves() == 1 {
        state.allocations.iter_mut().for_each(|a| *a = 0);
        return Ok(());
    }
    let log_w = profile_log_weights(tree, state, data);
    let kernels = &state.kernels;
    let zeta = model.zeta;
    state
        .allocations
        .par_chunks_mut(ALLOCATION_CHUNK)
        .enumerate()
        .try_for_each(|(c, out)| {
            let mut rng = key.stream(tag::ALLOCATE, c as u64);
            let mut scratch = vec![0.0; data.d()];
            for (j, slot) in out.iter_mut().enumerate() {
                let i = c * ALLOCATION_CHUNK + j;
                let lw = &log_w[data.profile_of(i)];
                let y = data.y(i);
                let mut best = f64::NEG_INFINITY;
                let mut arg = usize::MAX;
                let mut finite = false;
                for (k, kernel) in kernels.iter().enumerate() {
                    let s = lw[k] + zeta * kernel.log_density(y, &mut scratch);
                    let u: f64 = rng.sample(Open01);
                    if s.is_nan() {
                        return Err(Error::Numerical(format!("allocation score for observation {i} is NaN")));
                    }
                    if s > f64::NEG_INFINITY {
                        finite = true;
                        let g = s - (-u.ln()).ln();
                        if g > best {
                            best = g;
                            arg = k;
                        }
                    }
                }
                if !finite {
                    return Err(Error::Numerical(format!(
                        "all allocation masses for observation {i} underflow to zero"
                    )));
                }
                *slot = arg;
            }
            Ok(())
        })
}

/// Draws the Pólya-Gamma auxiliaries for one internal node and then its
/// coefficients from the Gaussian conditional. Observations below the left
/// child contribute `kappa = 1/2`, those below the right child `-1/2`.
/// With no observations below the node the draw comes from the prior.
#[allow(clippy::too_many_arguments)]
fn draw_node<R: Rng + ?Sized>(
    node: usize,
    tree: &TreeTopology,
    prior: &GammaPrior,
    data: &Dataset,
    members: &[Vec<u32>],
    gamma: &DVector<f64>,
    aux: &mut Vec<(u32, f64)>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let r = prior.dim();
    let span = tree.span(node);
    let mut prec = prior.precision().clone();
    let mut rhs = prior.precision_mean().clone();
    aux.clear();
    for leaf in span.lo..span.hi {
        let kappa = if leaf < span.mid { 0.5 } else { -0.5 };
        for &i in &members[leaf] {
            let psi = data.features(i as usize);
            let omega = sample_pg1(dot(gamma.as_slice(), psi), rng);
            aux.push((i, omega));
            for a in 0..r {
                rhs[a] += kappa * psi[a];
                let wa = omega * psi[a];
                for b in 0..=a {
                    prec[(a, b)] += wa * psi[b];
                }
            }
        }
    }
    for a in 0..r {
        for b in 0..a {
            prec[(b, a)] = prec[(a, b)];
        }
    }
    let chol = prec.cholesky().ok_or_else(|| {
        Error::Numerical(format!("coefficient precision at node {} is not positive definite", tree.internal_nodes()[node]))
    })?;
    let mean = chol.solve(&rhs);
    let z = DVector::from_iterator(r, (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(mean + offset)
}

/// Updates one internal node's coefficients and auxiliaries.
pub fn update_gamma_node(
    node: usize,
    state: &mut MixtureState,
    model: &Model,
    data: &Dataset,
    key: StreamKey,
) -> Result<()> {
    let members = state.leaf_members(model.tree.num_leaves());
    let mut rng = key.stream(tag::GAMMA, node as u64);
    let gamma = state.coeffs.get(node).clone();
    let new = draw_node(node, &model.tree, &model.gamma_prior, data, &members, &gamma, &mut state.pg_aux[node], &mut rng)?;
    state.coeffs.set(node, new);
    Ok(())
}

fn update_all_gammas(state: &mut MixtureState, model: &Model, data: &Dataset, key: StreamKey) -> Result<()> {
    let tree = &model.tree;
    let members = state.leaf_members(tree.num_leaves());
    let coeffs = &state.coeffs;
    // nodes are conditionally independent given the allocations
    let drawn: Vec<DVector<f64>> = state
        .pg_aux
        .par_iter_mut()
        .enumerate()
        .map(|(node, aux)| {
            let mut rng = key.stream(tag::GAMMA, node as u64);
            draw_node(node, tree, &model.gamma_prior, data, &members, coeffs.get(node), aux, &mut rng)
        })
        .collect::<Result<_>>()?;
    for (node, g) in drawn.into_iter().enumerate() {
        state.coeffs.set(node, g);
    }
    Ok(())
}

/// Draws every leaf kernel from its Normal-Inverse-Wishart conditional with
/// `zeta`-weighted statistics. Empty leaves draw from the base measure.
pub fn update_atoms(state: &mut MixtureState, model: &Model, data: &Dataset, key: StreamKey) -> Result<()> {
    let members = state.leaf_members(model.tree.num_leaves());
    state.kernels = atoms_given_members(&members, model, data, key)?;
    Ok(())
}

pub(crate) fn atoms_given_members(
    members: &[Vec<u32>],
    model: &Model,
    data: &Dataset,
    key: StreamKey,
) -> Result<Vec<Kernel>> {
    let d = data.d();
    members
        .par_iter()
        .enumerate()
        .map(|(leaf, m)| {
            let stats = LeafStats::from_rows(d, m.iter().map(|&i| data.y(i as usize)));
            let post = model.hyper.posterior(&stats, model.zeta)?;
            post.sample(&mut key.stream(tag::ATOMS, leaf as u64))
        })
        .collect()
}

/// One full sweep: allocations, then every node's coefficients, then kernels.
pub fn gibbs_sweep(state: &mut MixtureState, model: &Model, data: &Dataset, key: StreamKey) -> Result<()> {
    allocate_observations(state, model, data, key)?;
    update_all_gammas(state, model, data, key)?;
    update_atoms(state, model, data, key)
}

/// Prior precision plus `sum omega psi psi'` for a node, from stored
/// auxiliaries. Used by diagnostics of the coefficient step.
pub fn node_precision(state: &MixtureState, model: &Model, data: &Dataset, node: usize) -> DMatrix<f64> {
    let mut prec = model.gamma_prior.precision().clone();
    for &(i, omega) in &state.pg_aux[node] {
        let psi = DVector::from_column_slice(data.features(i as usize));
        prec += &psi * psi.transpose() * omega;
    }
    prec
}
