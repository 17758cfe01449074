//! Chain initialization, the burn-in/thinning schedule and forward
//! simulation from the joint prior.

use nalgebra::DVector;
use rand::Rng;

use super::config::{InitKind, Model, RunConfig};
use super::sweep::{allocate_observations, atoms_given_members, gibbs_sweep};
use super::trace::{Draw, PosteriorTrace, TraceHeader};
use super::{MixtureState, StreamKey};
use crate::data_io::Dataset;
use crate::error::{invalid, Result};
use crate::rng::tag;
use crate::stick_breaking::SplitCoefficientSet;
use crate::tree::TreeKind;

const LLOYD_ITERATIONS: usize = 50;

/// k-means++ seeding followed by Lloyd iterations. Returns a label per row.
fn kmeans<R: Rng + ?Sized>(data: &Dataset, k: usize, rng: &mut R) -> Vec<usize> {
    let n = data.n();
    let d = data.d();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![data.y(rng.random_range(0..n)).to_vec()];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(data.y(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = data.y(next).to_vec();
        for (i, m) in nearest.iter_mut().enumerate() {
            *m = m.min(dist2(data.y(i), &c));
        }
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let y = data.y(i);
            let best = (0..k)
                .min_by(|&a, &b| dist2(y, &centers[a]).total_cmp(&dist2(y, &centers[b])))
                .unwrap_or(0);
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(data.y(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    labels
}

/// Starting state for a chain.
///
/// `KMeans` clusters the responses into `K/2` groups and places them on
/// leaves that leave room for splitting (every other leaf of a balanced tree,
/// the first leaves of a lopsided tree); kernels are then drawn from their
/// conditional and coefficients start at the prior mean. `Prior` draws every
/// parameter from the prior and allocates from the full conditional.
pub fn initial_state(model: &Model, data: &Dataset, init: InitKind, key: StreamKey) -> Result<MixtureState> {
    let tree = &model.tree;
    let k_leaves = tree.num_leaves();
    let r = model.gamma_prior.dim();
    if data.r() != r {
        return invalid(format!("data has {} features but the coefficient prior has {r}", data.r()));
    }
    let mut state = MixtureState {
        allocations: vec![0; data.n()],
        kernels: Vec::new(),
        coeffs: SplitCoefficientSet::zeros(tree.num_internal(), r),
        pg_aux: vec![Vec::new(); tree.num_internal()],
    };
    match init {
        InitKind::KMeans if data.n() > 0 => {
            let k = (k_leaves / 2).clamp(1, data.n());
            let labels = kmeans(data, k, &mut key.stream(tag::INIT, 0));
            let stride = if tree.kind() == TreeKind::Balanced && k_leaves >= 2 { 2 } else { 1 };
            state.allocations = labels.into_iter().map(|c| c * stride).collect();
            for node in 0..tree.num_internal() {
                state.coeffs.set(node, model.gamma_prior.mean().clone());
            }
            let members = state.leaf_members(k_leaves);
            state.kernels = atoms_given_members(&members, model, data, key)?;
        }
        _ => {
            let mut rng = key.stream(tag::INIT, 1);
            state.coeffs = SplitCoefficientSet::sample_prior(tree, &model.gamma_prior, &mut rng);
            state.kernels = (0..k_leaves)
                .map(|leaf| model.hyper.sample(&mut key.stream(tag::INIT, 2 + leaf as u64)))
                .collect::<Result<_>>()?;
            allocate_observations(&mut state, model, data, key)?;
        }
    }
    Ok(state)
}

pub fn trace_header(model: &Model, data: &Dataset, chain: u64, seed: u64) -> TraceHeader {
    TraceHeader {
        tree: model.tree.kind(),
        leaves: model.tree.leaves().to_vec(),
        internal: model.tree.internal_nodes().to_vec(),
        n: data.n(),
        d: data.d(),
        r: data.r(),
        profiles: data.profiles().to_vec(),
        chain,
        seed,
    }
}

pub fn snapshot(model: &Model, data: &Dataset, state: &MixtureState, draw: usize, sweep: u64) -> Result<Draw> {
    Ok(Draw {
        draw,
        sweep,
        gamma: state.coeffs.iter().map(|g| g.as_slice().to_vec()).collect(),
        kernels: state.kernels.clone(),
        allocations: state.allocations.clone(),
        weights: state.profile_weights(&model.tree, data)?,
    })
}

/// Runs one chain: `burn_in` discarded sweeps, then a draw every `thin`
/// sweeps until `n_draws` are collected. Each draw is handed to `on_draw` as
/// soon as it is taken. The result depends only on the config, the data and
/// the chain index.
pub fn run_chain_with<F>(data: &Dataset, config: &RunConfig, chain: u64, mut on_draw: F) -> Result<PosteriorTrace>
where
    F: FnMut(&Draw) -> Result<()>,
{
    let model = config.model(data)?;
    let mut trace = PosteriorTrace::new(trace_header(&model, data, chain, config.seed));
    let mut state = initial_state(&model, data, config.init, StreamKey::new(config.seed, chain, 0))?;
    let total = config.burn_in as u64 + (config.thin * config.n_draws) as u64;
    for sweep in 1..=total {
        gibbs_sweep(&mut state, &model, data, StreamKey::new(config.seed, chain, sweep))?;
        let after = sweep as i64 - config.burn_in as i64;
        if after > 0 && (after as u64).is_multiple_of(config.thin as u64) {
            let d = snapshot(&model, data, &state, trace.draws.len(), sweep)?;
            on_draw(&d)?;
            trace.draws.push(d);
        }
    }
    trace.complete = true;
    Ok(trace)
}

pub fn run_chain(data: &Dataset, config: &RunConfig, chain: u64) -> Result<PosteriorTrace> {
    run_chain_with(data, config, chain, |_| Ok(()))
}

/// Forward simulation from the joint prior: coefficients, kernels,
/// allocations drawn from the covariate-dependent weights, then responses.
/// `feats` is the row-major `n x R` feature matrix.
pub fn sample_from_prior(model: &Model, feats: Vec<f64>, key: StreamKey) -> Result<(MixtureState, Dataset)> {
    let tree = &model.tree;
    let r = model.gamma_prior.dim();
    let d = model.hyper.dim();
    if !feats.len().is_multiple_of(r) {
        return invalid(format!("feature buffer of {} values is not a multiple of R = {r}", feats.len()));
    }
    let n = feats.len() / r;
    let mut rng = key.stream(tag::SIMULATE, 0);
    let coeffs = SplitCoefficientSet::sample_prior(tree, &model.gamma_prior, &mut rng);
    let kernels = (0..tree.num_leaves())
        .map(|_| model.hyper.sample(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut state = MixtureState {
        allocations: Vec::with_capacity(n),
        kernels,
        coeffs,
        pg_aux: vec![Vec::new(); tree.num_internal()],
    };
    let mut y = Vec::with_capacity(n * d);
    for i in 0..n {
        let w = state.weights_at(tree, &feats[i * r..(i + 1) * r])?;
        let mut u: f64 = rng.random();
        let mut leaf = w.len() - 1;
        for (k, &p) in w.as_slice().iter().enumerate() {
            if u < p {
                leaf = k;
                break;
            }
            u -= p;
        }
        state.allocations.push(leaf);
        y.extend(state.kernels[leaf].sample(&mut rng));
    }
    let data = Dataset::new(d, r, y, feats)?;
    Ok((state, data))
}

/// Redraws every response from its allocated kernel.
pub fn resample_responses(state: &MixtureState, data: &mut Dataset, key: StreamKey) {
    let mut rng = key.stream(tag::SIMULATE, 1);
    let d = data.d();
    let ys = data.responses_mut();
    for (i, &leaf) in state.allocations.iter().enumerate() {
        ys[i * d..(i + 1) * d].copy_from_slice(&state.kernels[leaf].sample(&mut rng));
    }
}

/// Mean of the root splitting variable over observations, one of the
/// scalar summaries used for joint-distribution checks.
pub fn mean_root_split(state: &MixtureState, data: &Dataset) -> f64 {
    if data.n() == 0 || state.coeffs.is_empty() {
        return f64::NAN;
    }
    let g: &DVector<f64> = state.coeffs.get(0);
    let s: f64 = (0..data.n())
        .map(|i| {
            let eta: f64 = g.iter().zip(data.features(i)).map(|(a, b)| a * b).sum();
            1.0 / (1.0 + (-eta).exp())
        })
        .sum();
    s / data.n() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::niw::NiwPrior;
    use crate::stats::Moments;
    use crate::stick_breaking::GammaPrior;
    use crate::tree::TreeTopology;
    use nalgebra::DMatrix;

    fn small_config() -> RunConfig {
        RunConfig {
            tree: TreeKind::Balanced,
            num_leaves: 4,
            burn_in: 0,
            thin: 1,
            n_draws: 5,
            seed: 11,
            ..RunConfig::default()
        }
    }

    fn three_blobs(n: usize) -> Dataset {
        let mut rng = crate::rng::substream(5, &[1]);
        let y: Vec<f64> = (0..n)
            .map(|i| (i % 3) as f64 * 6.0 - 6.0 + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Dataset::new(1, 1, y, vec![1.0; n]).unwrap()
    }

    #[test]
    fn trace_length_matches_schedule() {
        let data = three_blobs(30);
        let t = run_chain(&data, &small_config(), 0).unwrap();
        assert_eq!(t.draws.len(), 5);
        assert!(t.complete);
        assert_eq!(t.draws.iter().map(|d| d.sweep).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);

        let cfg = RunConfig {
            burn_in: 7,
            thin: 3,
            n_draws: 2,
            ..small_config()
        };
        let t = run_chain(&data, &cfg, 0).unwrap();
        assert_eq!(t.draws.iter().map(|d| d.sweep).collect::<Vec<_>>(), vec![10, 13]);
    }

    #[test]
    fn equal_seeds_give_identical_traces() {
        let data = three_blobs(90);
        let a = run_chain(&data, &small_config(), 0).unwrap();
        let b = run_chain(&data, &small_config(), 0).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&data, &small_config(), 1).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn kmeans_init_uses_alternate_balanced_leaves() {
        let data = three_blobs(60);
        let cfg = RunConfig {
            num_leaves: 8,
            ..small_config()
        };
        let model = cfg.model(&data).unwrap();
        let s = initial_state(&model, &data, InitKind::KMeans, StreamKey::new(1, 0, 0)).unwrap();
        assert!(s.allocations.iter().all(|a| a % 2 == 0));
        assert_eq!(s.kernels.len(), 8);
    }

    #[test]
    fn no_data_sweeps_sample_the_prior() {
        let tree = TreeTopology::build(TreeKind::Balanced, 4).unwrap();
        let model = Model {
            tree,
            gamma_prior: GammaPrior::isotropic(1, 0.5, 1.0).unwrap(),
            hyper: NiwPrior::new(DVector::zeros(1), 1.0, 3.0, DMatrix::identity(1, 1)).unwrap(),
            zeta: 1.0,
        };
        let data = Dataset::new(1, 1, vec![], vec![]).unwrap();
        let mut state = initial_state(&model, &data, InitKind::Prior, StreamKey::new(2, 0, 0)).unwrap();
        let mut v = Moments::new(0.5);
        for sweep in 1..=20_000 {
            gibbs_sweep(&mut state, &model, &data, StreamKey::new(2, 0, sweep)).unwrap();
            let g = state.coeffs.get(0)[0];
            v.push(1.0 / (1.0 + (-g).exp()));
        }
        // E logistic(N(0.5, 1)) by quadrature
        let oracle = logistic_normal_mean(0.5, 1.0);
        assert!((v.mean() - oracle).abs() < 4.0 * v.se_mean(), "{} vs {oracle}", v.mean());
    }

    fn logistic_normal_mean(mu: f64, var: f64) -> f64 {
        // trapezoid on a wide grid, exact enough for a smooth integrand
        let s = var.sqrt();
        let h = 1e-3;
        let mut acc = 0.0;
        let mut z: f64 = -12.0;
        while z <= 12.0 {
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            acc += phi / (1.0 + (-(mu + s * z)).exp()) * h;
            z += h;
        }
        acc
    }

    #[test]
    fn prior_simulation_shapes() {
        let cfg = small_config();
        let data = three_blobs(10);
        let model = cfg.model(&data).unwrap();
        let (state, sim) = sample_from_prior(&model, vec![1.0; 25], StreamKey::new(3, 0, 0)).unwrap();
        assert_eq!(sim.n(), 25);
        assert_eq!(state.allocations.len(), 25);
        let mut sim2 = sim.clone();
        resample_responses(&state, &mut sim2, StreamKey::new(3, 0, 1));
        assert_ne!(sim.responses(), sim2.responses());
        assert!(mean_root_split(&state, &sim) > 0.0);
    }
}
