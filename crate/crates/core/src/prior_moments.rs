//! Moments of the random measures `G_x` under a tree stick-breaking prior.
//!
//! Closed forms cover the measure moments as functions of base-measure event
//! probabilities and the cross-weight kernel `a(x, x') = sum_e E[W_x,e W_x',e]`,
//! plus the kernel itself for lopsided and balanced trees under identically
//! distributed splits. Monte-Carlo estimators simulate the same quantities
//! from prior draws of the split coefficients.
//!
//! Monte-Carlo budgets are divided into a fixed number of chunks, each with
//! its own substream; chunk results are merged in chunk order, so estimates
//! depend only on the seed and the chunk count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng::{substream, tag};
use crate::stats::{BivariateMoments, Moments};
use crate::stick_breaking::{dot, log_weights_from_eta, sigmoid, GammaPrior};
use crate::tree::{TreeKind, TreeTopology};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureMomentInputs {
    /// `G0(A)`
    pub p: f64,
    /// `G0(A ∩ A')`
    pub p_joint: f64,
    /// `G0(A')`
    pub p2: f64,
    pub a_xx: f64,
    pub a_xxp: f64,
    pub a_xpxp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureMoments {
    pub mean: f64,
    pub variance: f64,
    pub cov_sets: f64,
    pub cov_covariates: f64,
    pub corr_sets: f64,
    pub corr_covariates: f64,
}

impl MeasureMomentInputs {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("p_joint", self.p_joint), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} = {v} is not a probability"));
            }
        }
        if self.p_joint > self.p.min(self.p2) {
            return invalid(format!(
                "p_joint = {} exceeds min(p, p2) = {}",
                self.p_joint,
                self.p.min(self.p2)
            ));
        }
        for (name, v) in [("a_xx", self.a_xx), ("a_xx'", self.a_xxp), ("a_x'x'", self.a_xpxp)] {
            if !(v > 0.0 && v <= 1.0) {
                return invalid(format!("{name} = {v} is outside (0, 1]"));
            }
        }
        Ok(())
    }
}

pub fn measure_moments(inp: &MeasureMomentInputs) -> Result<MeasureMoments> {
    inp.validate()?;
    let v = inp.p - inp.p * inp.p;
    Ok(MeasureMoments {
        mean: inp.p,
        variance: v * inp.a_xx,
        cov_sets: (inp.p_joint - inp.p * inp.p2) * inp.a_xx,
        cov_covariates: v * inp.a_xxp,
        corr_sets: corr_sets(inp.p, inp.p_joint, inp.p2)?,
        corr_covariates: corr_covariates(inp.a_xx, inp.a_xxp, inp.a_xpxp),
    })
}

/// Correlation of `G_x(A)` and `G_x(A')`. It does not involve `a`.
pub fn corr_sets(p: f64, p_joint: f64, p2: f64) -> Result<f64> {
    for (name, v) in [("G0(A)", p), ("1 - G0(A)", 1.0 - p), ("G0(A')", p2), ("1 - G0(A')", 1.0 - p2)] {
        if v <= 0.0 {
            return Err(Error::Domain(format!("{name} is zero; correlation undefined")));
        }
    }
    Ok((p_joint - p * p2) / (p * (1.0 - p) * p2 * (1.0 - p2)).sqrt())
}

/// Correlation of `G_x(A)` and `G_x'(A)`.
pub fn corr_covariates(a_xx: f64, a_xxp: f64, a_xpxp: f64) -> f64 {
    a_xxp / (a_xx * a_xpxp).sqrt()
}

/// Kernel `a` for the lopsided construction truncated after `k` breaks with
/// no remainder leaf: `sum_{j<=k} E[W_j W'_j]` where `W_j = V_j prod_{l<j}(1 - V_l)`.
pub fn a_lt_truncated(k: u32, ev_x: f64, ev_xp: f64, ev_xxp: f64) -> Result<f64> {
    let denom = ev_x + ev_xp - ev_xxp;
    if denom == 0.0 {
        return Err(Error::Domain("E V_x + E V_x' - E V_x V_x' is zero".into()));
    }
    let d = 1.0 - (ev_x + ev_xp) + ev_xxp;
    if k <= 4096 {
        // geometric sum; exact at k = 1 and free of the 1 - d^k cancellation
        let (mut sum, mut term) = (0.0, 1.0);
        for _ in 0..k {
            sum += term;
            term *= d;
        }
        return Ok(ev_xxp * sum);
    }
    Ok(ev_xxp * (1.0 - d.powi(k as i32)) / denom)
}

/// Kernel `a` for a lopsided tree with `k` leaves, where the last leaf keeps
/// the remainder of the stick.
pub fn a_lt_finite(k: u32, ev_x: f64, ev_xp: f64, ev_xxp: f64) -> Result<f64> {
    if k == 0 {
        return invalid("a lopsided tree needs at least one leaf");
    }
    let d = 1.0 - (ev_x + ev_xp) + ev_xxp;
    let head = if k == 1 {
        0.0
    } else {
        a_lt_truncated(k - 1, ev_x, ev_xp, ev_xxp)?
    };
    Ok(head + d.powi(k as i32 - 1))
}

/// Kernel `a` for a balanced tree of depth `m`.
pub fn a_bt(m: u32, ev_x: f64, ev_xp: f64, ev_xxp: f64) -> Result<f64> {
    let base = 1.0 - (ev_x + ev_xp) + 2.0 * ev_xxp;
    if base < 0.0 {
        return Err(Error::Domain(format!(
            "1 - E V_x - E V_x' + 2 E V_x V_x' = {base} is negative; moments are inconsistent"
        )));
    }
    Ok(base.powi(m as i32))
}

/// Lower bound on the covariate correlation for a lopsided tree with `k` breaks.
pub fn lower_bound_lt(k: u32) -> f64 {
    let k = k as i32;
    (1.0 - 4f64.powi(-k)) / (3.0 * (1.0 - 2f64.powi(-k)))
}

/// Lower bound on the covariate correlation for a balanced tree of depth `m`.
pub fn lower_bound_bt(m: u32) -> f64 {
    2f64.powi(-(m as i32))
}

/// Closed-form `a(x, x')` for the sampler's finite trees.
pub fn a_closed_form(kind: TreeKind, num_leaves: usize, ev_x: f64, ev_xp: f64, ev_xxp: f64) -> Result<f64> {
    match kind {
        TreeKind::Lopsided => a_lt_finite(num_leaves as u32, ev_x, ev_xp, ev_xxp),
        TreeKind::Balanced => {
            if !num_leaves.is_power_of_two() {
                return invalid(format!("balanced tree with {num_leaves} leaves"));
            }
            a_bt(num_leaves.trailing_zeros(), ev_x, ev_xp, ev_xxp)
        }
        TreeKind::Custom => invalid("closed forms exist only for lopsided and balanced trees"),
    }
}

/// Split of a Monte-Carlo budget over independent substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McPlan {
    pub seed: u64,
    pub chunks: usize,
}

impl McPlan {
    pub fn new(seed: u64) -> Self {
        Self { seed, chunks: 64 }
    }

    fn sizes(&self, n: usize) -> Vec<usize> {
        let c = self.chunks.max(1);
        (0..c).map(|i| n / c + usize::from(i < n % c)).collect()
    }
}

fn check_features(prior: &GammaPrior, fx: &[f64], fxp: &[f64]) -> Result<()> {
    if fx.len() != prior.dim() || fxp.len() != prior.dim() {
        return invalid(format!(
            "feature lengths {} and {} do not match coefficient length {}",
            fx.len(),
            fxp.len(),
            prior.dim()
        ));
    }
    Ok(())
}

fn check_budget(n_mc: usize) -> Result<()> {
    if n_mc < 1000 {
        return invalid(format!("Monte-Carlo budget {n_mc} is below 1000"));
    }
    Ok(())
}

/// Estimate with its Monte-Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitProducts {
    pub ev_x: Estimate,
    pub ev_xp: Estimate,
    pub ev_xxp: Estimate,
}

/// Monte-Carlo `E V_x`, `E V_x'` and `E V_x V_x'` under the logit-normal
/// split model, with both covariates sharing each coefficient draw.
pub fn ev_product_logitnormal(
    prior: &GammaPrior,
    fx: &[f64],
    fxp: &[f64],
    n_mc: usize,
    plan: McPlan,
) -> Result<SplitProducts> {
    check_features(prior, fx, fxp)?;
    check_budget(n_mc)?;
    let parts: Vec<[Moments; 3]> = plan
        .sizes(n_mc)
        .into_par_iter()
        .enumerate()
        .map(|(c, n)| {
            let mut rng = substream(plan.seed, &[tag::MOMENTS, 1, c as u64]);
            let mut acc = [Moments::new(0.5), Moments::new(0.5), Moments::new(0.25)];
            for _ in 0..n {
                let g = prior.sample(&mut rng);
                let v = sigmoid(dot(g.as_slice(), fx));
                let vp = sigmoid(dot(g.as_slice(), fxp));
                acc[0].push(v);
                acc[1].push(vp);
                acc[2].push(v * vp);
            }
            acc
        })
        .collect();
    let mut total = [Moments::new(0.5), Moments::new(0.5), Moments::new(0.25)];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    let est = |m: &Moments| Estimate {
        value: m.mean(),
        stderr: m.se_mean(),
    };
    Ok(SplitProducts {
        ev_x: est(&total[0]),
        ev_xp: est(&total[1]),
        ev_xxp: est(&total[2]),
    })
}

/// Draws prior leaf weights at two covariate profiles into `wx` and `wxp`.
struct PairSampler<'a> {
    tree: &'a TreeTopology,
    prior: &'a GammaPrior,
    fx: &'a [f64],
    fxp: &'a [f64],
    eta: Vec<f64>,
    etap: Vec<f64>,
    wx: Vec<f64>,
    wxp: Vec<f64>,
}

impl<'a> PairSampler<'a> {
    fn new(tree: &'a TreeTopology, prior: &'a GammaPrior, fx: &'a [f64], fxp: &'a [f64]) -> Self {
        Self {
            tree,
            prior,
            fx,
            fxp,
            eta: vec![0.0; tree.num_internal()],
            etap: vec![0.0; tree.num_internal()],
            wx: vec![0.0; tree.num_leaves()],
            wxp: vec![0.0; tree.num_leaves()],
        }
    }

    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.tree.num_internal() {
            let g = self.prior.sample(rng);
            self.eta[i] = dot(g.as_slice(), self.fx);
            self.etap[i] = dot(g.as_slice(), self.fxp);
        }
        log_weights_from_eta(self.tree, &self.eta, &mut self.wx);
        log_weights_from_eta(self.tree, &self.etap, &mut self.wxp);
        self.wx.iter_mut().for_each(|w| *w = w.exp());
        self.wxp.iter_mut().for_each(|w| *w = w.exp());
    }
}

/// Monte-Carlo `sum E[W_x,e W_x',e]` over the first `leaf_count` leaves of
/// `tree` (left to right). Summing the first `K` leaves of a lopsided tree
/// with `K + 1` leaves gives the remainder-free truncation.
pub fn mc_weight_cross_moment(
    tree: &TreeTopology,
    prior: &GammaPrior,
    fx: &[f64],
    fxp: &[f64],
    leaf_count: usize,
    n_mc: usize,
    plan: McPlan,
) -> Result<Estimate> {
    check_features(prior, fx, fxp)?;
    check_budget(n_mc)?;
    if leaf_count == 0 || leaf_count > tree.num_leaves() {
        return invalid(format!(
            "leaf count {leaf_count} outside 1..={}",
            tree.num_leaves()
        ));
    }
    let parts: Vec<Moments> = plan
        .sizes(n_mc)
        .into_par_iter()
        .enumerate()
        .map(|(c, n)| {
            let mut rng = substream(plan.seed, &[tag::MOMENTS, 2, c as u64]);
            let mut s = PairSampler::new(tree, prior, fx, fxp);
            let mut acc = Moments::new(0.0);
            for _ in 0..n {
                s.draw(&mut rng);
                acc.push(dot(&s.wx[..leaf_count], &s.wxp[..leaf_count]));
            }
            acc
        })
        .collect();
    let mut total = Moments::new(0.0);
    parts.iter().for_each(|p| total.merge(p));
    Ok(Estimate {
        value: total.mean(),
        stderr: total.se_mean(),
    })
}

/// Joint Monte-Carlo sample of `(G_x(A), G_x'(A))`. Event membership of each
/// leaf's atom is an independent Bernoulli(`p`) indicator shared by both
/// covariates.
pub fn simulate_measure_pairs(
    tree: &TreeTopology,
    prior: &GammaPrior,
    fx: &[f64],
    fxp: &[f64],
    p: f64,
    n_mc: usize,
    plan: McPlan,
) -> Result<BivariateMoments> {
    check_features(prior, fx, fxp)?;
    check_budget(n_mc)?;
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("p = {p} is not a probability"));
    }
    let parts: Vec<BivariateMoments> = plan
        .sizes(n_mc)
        .into_par_iter()
        .enumerate()
        .map(|(c, n)| {
            let mut rng = substream(plan.seed, &[tag::MOMENTS, 3, c as u64]);
            let mut s = PairSampler::new(tree, prior, fx, fxp);
            let mut acc = BivariateMoments::new(p, p);
            for _ in 0..n {
                s.draw(&mut rng);
                let (mut gx, mut gxp) = (0.0, 0.0);
                for (a, b) in s.wx.iter().zip(&s.wxp) {
                    if rng.random::<f64>() < p {
                        gx += a;
                        gxp += b;
                    }
                }
                acc.push(gx, gxp);
            }
            acc
        })
        .collect();
    let mut total = BivariateMoments::new(p, p);
    parts.iter().for_each(|b| total.merge(b));
    Ok(total)
}

/// Monte-Carlo `corr(G_x(A), G_x'(A))` with its standard error.
#[allow(clippy::too_many_arguments)]
pub fn mc_corr_measures(
    kind: TreeKind,
    num_leaves: usize,
    prior: &GammaPrior,
    fx: &[f64],
    fxp: &[f64],
    p: f64,
    n_mc: usize,
    plan: McPlan,
) -> Result<Estimate> {
    let tree = TreeTopology::build(kind, num_leaves)?;
    let pairs = simulate_measure_pairs(&tree, prior, fx, fxp, p, n_mc, plan)?;
    let (value, stderr) = pairs
        .correlation()
        .ok_or_else(|| Error::Domain("simulated measures have zero variance".into()))?;
    Ok(Estimate { value, stderr })
}

/// Closed-form covariate correlation with split moments estimated by
/// Monte-Carlo; the three `a` terms share one set of coefficient draws.
pub fn corr_closed_form_mc(
    kind: TreeKind,
    num_leaves: usize,
    prior: &GammaPrior,
    fx: &[f64],
    fxp: &[f64],
    n_mc: usize,
    plan: McPlan,
) -> Result<f64> {
    let cross = ev_product_logitnormal(prior, fx, fxp, n_mc, plan)?;
    let same_x = ev_product_logitnormal(prior, fx, fx, n_mc, plan)?;
    let same_xp = ev_product_logitnormal(prior, fxp, fxp, n_mc, plan)?;
    let a = |e: &SplitProducts| a_closed_form(kind, num_leaves, e.ev_x.value, e.ev_xp.value, e.ev_xxp.value);
    Ok(corr_covariates(a(&same_x)?, a(&cross)?, a(&same_xp)?))
}

/// Prior draws of leaf weights and split values at one covariate profile.
pub fn prior_weight_draws(
    tree: &TreeTopology,
    prior: &GammaPrior,
    feats: &[f64],
    n: usize,
    plan: McPlan,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_features(prior, feats, feats)?;
    let parts: Vec<Vec<(Vec<f64>, Vec<f64>)>> = plan
        .sizes(n)
        .into_par_iter()
        .enumerate()
        .map(|(c, n)| {
            let mut rng = substream(plan.seed, &[tag::MOMENTS, 4, c as u64]);
            let mut s = PairSampler::new(tree, prior, feats, feats);
            (0..n)
                .map(|_| {
                    s.draw(&mut rng);
                    (s.wx.clone(), s.eta.iter().map(|&e| sigmoid(e)).collect())
                })
                .collect()
        })
        .collect();
    Ok(parts.into_iter().flatten().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `sum_k E[W_k^2]` for constant splits `v`, first `k` lopsided breaks.
    fn constant_split_lt(k: u32, v: f64) -> f64 {
        (0..k).map(|j| (v * (1.0 - v).powi(j as i32)).powi(2)).sum()
    }

    #[test]
    fn measure_moment_examples() {
        let inp = MeasureMomentInputs {
            p: 0.5,
            p_joint: 0.2,
            p2: 0.3,
            a_xx: 1.0,
            a_xxp: 0.4,
            a_xpxp: 0.7,
        };
        let m = measure_moments(&inp).unwrap();
        assert_eq!(m.mean, 0.5);
        assert_eq!(m.variance, 0.25);
        assert!((m.cov_sets - 0.05).abs() < 1e-15);
        assert!((m.cov_covariates - 0.1).abs() < 1e-15);

        let same = MeasureMomentInputs { a_xx: 0.3, a_xxp: 0.3, a_xpxp: 0.3, ..inp };
        assert!((measure_moments(&same).unwrap().corr_covariates - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corr_sets_ignores_a() {
        let base = MeasureMomentInputs {
            p: 0.4,
            p_joint: 0.1,
            p2: 0.5,
            a_xx: 0.2,
            a_xxp: 0.1,
            a_xpxp: 0.2,
        };
        let c1 = measure_moments(&base).unwrap().corr_sets;
        let c2 = measure_moments(&MeasureMomentInputs { a_xx: 0.9, ..base }).unwrap().corr_sets;
        assert_eq!(c1, c2);
    }

    #[test]
    fn degenerate_probability_is_domain_error() {
        let inp = MeasureMomentInputs {
            p: 1.0,
            p_joint: 0.5,
            p2: 0.5,
            a_xx: 1.0,
            a_xxp: 1.0,
            a_xpxp: 1.0,
        };
        match measure_moments(&inp) {
            Err(Error::Domain(msg)) => assert!(msg.contains("1 - G0(A)")),
            other => panic!("{other:?}"),
        }
        assert!(measure_moments(&MeasureMomentInputs { p_joint: 0.9, p: 0.95, ..inp }).is_err());
    }

    #[test]
    fn lt_truncated_examples() {
        assert_eq!(a_lt_truncated(1, 0.3, 0.6, 0.2).unwrap(), 0.2);
        assert!((a_lt_truncated(2, 0.5, 0.5, 0.25).unwrap() - 0.3125).abs() < 1e-15);
        assert!((a_lt_truncated(2, 0.5, 0.5, 0.25).unwrap() - constant_split_lt(2, 0.5)).abs() < 1e-15);
        assert!((a_lt_truncated(500, 0.5, 0.5, 0.25).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((a_lt_truncated(5000, 0.5, 0.5, 0.25).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(a_lt_truncated(3, 0.0, 0.0, 0.0), Err(Error::Domain(_))));
        for k in 1..12 {
            assert!((a_lt_truncated(k, 0.3, 0.3, 0.09).unwrap() - constant_split_lt(k, 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn lt_finite_includes_remainder() {
        assert_eq!(a_lt_finite(1, 0.3, 0.4, 0.1).unwrap(), 1.0);
        // constant split 0.5 with 3 leaves: weights 1/2, 1/4, 1/4
        assert!((a_lt_finite(3, 0.5, 0.5, 0.25).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn bt_examples() {
        assert_eq!(a_bt(0, 0.3, 0.4, 0.1).unwrap(), 1.0);
        assert!((a_bt(2, 0.5, 0.5, 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(a_bt(20, 0.5, 0.5, 0.25).unwrap(), 2f64.powi(-20));
        assert!(matches!(a_bt(2, 0.9, 0.9, 0.3), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_forms_are_symmetric() {
        let (e1, e2, e12) = (0.42, 0.61, 0.27);
        for k in [1, 3, 8] {
            assert_eq!(a_lt_truncated(k, e1, e2, e12).unwrap(), a_lt_truncated(k, e2, e1, e12).unwrap());
            assert_eq!(a_bt(k, e1, e2, e12).unwrap(), a_bt(k, e2, e1, e12).unwrap());
        }
    }

    #[test]
    fn lower_bounds() {
        assert!((lower_bound_lt(200) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(lower_bound_lt(1), 0.5);
        assert_eq!(lower_bound_bt(6), 1.0 / 64.0);
        for k in 1..40 {
            assert!(lower_bound_lt(k + 1) < lower_bound_lt(k));
            assert!(lower_bound_lt(k) > 1.0 / 3.0);
        }
    }

    #[test]
    fn near_degenerate_prior() {
        let prior = GammaPrior::isotropic(2, 0.0, 1e-12).unwrap();
        let e = ev_product_logitnormal(&prior, &[1.0, 0.0], &[1.0, 1.0], 2000, McPlan::new(1)).unwrap();
        assert!((e.ev_x.value - 0.5).abs() < 1e-5);
        assert!((e.ev_xxp.value - 0.25).abs() < 1e-5);
        let c = mc_corr_measures(TreeKind::Balanced, 8, &prior, &[1.0, 0.0], &[1.0, 1.0], 0.5, 20_000, McPlan::new(2))
            .unwrap();
        assert!((c.value - 1.0).abs() < 1e-4, "{c:?}");
    }

    #[test]
    fn identical_features_satisfy_jensen() {
        let prior = GammaPrior::isotropic(2, 0.3, 4.0).unwrap();
        let e = ev_product_logitnormal(&prior, &[1.0, 0.5], &[1.0, 0.5], 5000, McPlan::new(3)).unwrap();
        assert_eq!(e.ev_x, e.ev_xp);
        assert!(e.ev_xxp.value >= e.ev_x.value * e.ev_x.value);
    }

    #[test]
    fn linear_predictor_correlation() {
        // eta_x = g1, eta_x' = g1 + g2
        let (s1, s2) = (1.0, 3.0);
        let prior = GammaPrior::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![s1, s2]))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acc = BivariateMoments::new(0.0, 0.0);
        for _ in 0..100_000 {
            let g = prior.sample(&mut rng);
            acc.push(g[0], g[0] + g[1]);
        }
        let (r, se) = acc.correlation().unwrap();
        let expected = (1.0 + s2 / s1).powf(-0.5);
        assert!((r - expected).abs() < 3.0 * se, "{r} vs {expected}");
    }

    #[test]
    fn plans_are_reproducible() {
        let prior = GammaPrior::isotropic(2, 0.0, 1.0).unwrap();
        let t = TreeTopology::balanced(4).unwrap();
        let a = mc_weight_cross_moment(&t, &prior, &[1.0, 0.0], &[1.0, 1.0], 4, 4000, McPlan::new(9)).unwrap();
        let b = mc_weight_cross_moment(&t, &prior, &[1.0, 0.0], &[1.0, 1.0], 4, 4000, McPlan::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(mc_weight_cross_moment(&t, &prior, &[1.0], &[1.0, 1.0], 4, 4000, McPlan::new(9)).is_err());
        assert!(mc_weight_cross_moment(&t, &prior, &[1.0, 0.0], &[1.0, 1.0], 4, 10, McPlan::new(9)).is_err());
    }

    #[test]
    fn small_tree_brute_force_agreement() {
        // identically distributed splits with intercept-only features
        let prior = GammaPrior::isotropic(1, 0.4, 2.0).unwrap();
        let plan = McPlan::new(21);
        let ev = ev_product_logitnormal(&prior, &[1.0], &[1.0], 400_000, plan).unwrap();
        for (kind, k) in [(TreeKind::Balanced, 4), (TreeKind::Lopsided, 4), (TreeKind::Lopsided, 7)] {
            let t = TreeTopology::build(kind, k).unwrap();
            let mc = mc_weight_cross_moment(&t, &prior, &[1.0], &[1.0], k, 100_000, plan).unwrap();
            let cf = a_closed_form(kind, k, ev.ev_x.value, ev.ev_xp.value, ev.ev_xxp.value).unwrap();
            assert!((mc.value - cf).abs() < 3.0 * mc.stderr + 2e-3, "{kind} {k}: {} vs {cf}", mc.value);
        }
    }
}
