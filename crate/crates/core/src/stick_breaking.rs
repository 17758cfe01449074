//! Leaf weights from splitting variables, with covariate-dependent splits
//! through a logit-normal model: `V_x,e = logistic(psi(x)' gamma_e)`.
//!
//! Weight products are accumulated in log space and exponentiated once per
//! leaf, so deep lopsided trees do not underflow. Weights are never
//! renormalized afterwards.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::tree::{Child, TreeTopology};

/// Standard logistic function `1 / (1 + exp(-z))`.
pub fn logistic(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return invalid(format!("logistic of non-finite value {z}"));
    }
    Ok(sigmoid(z))
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln logistic(z)`.
#[inline]
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// Gaussian prior `N(mean, cov)` shared by every node's coefficient vector.
#[derive(Clone, Debug)]
pub struct GammaPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
}

impl GammaPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let r = mean.len();
        if r == 0 {
            return invalid("coefficient dimension must be at least 1");
        }
        if cov.nrows() != r || cov.ncols() != r {
            return invalid(format!(
                "prior covariance is {}x{}, expected {r}x{r}",
                cov.nrows(),
                cov.ncols()
            ));
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (&cov - cov.transpose()).iter().any(|v| v.abs() > 1e-12 * scale.max(1.0)) {
            return invalid("prior covariance is not symmetric");
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("prior covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        let precision_mean = &precision * &mean;
        Ok(Self {
            chol_lower: chol.l(),
            mean,
            cov,
            precision,
            precision_mean,
        })
    }

    /// `N(mean * 1, scale * I)` in dimension `r`.
    pub fn isotropic(r: usize, mean: f64, scale: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(r, mean),
            DMatrix::from_diagonal_element(r, r, scale),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `cov^{-1} mean`, the prior's contribution to the conditional mean.
    pub fn precision_mean(&self) -> &DVector<f64> {
        &self.precision_mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
        &self.mean + &self.chol_lower * z
    }
}

/// One coefficient vector per internal node, in the tree's internal-node order.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCoefficientSet {
    gammas: Vec<DVector<f64>>,
}

impl SplitCoefficientSet {
    pub fn new(gammas: Vec<DVector<f64>>) -> Result<Self> {
        if let Some(first) = gammas.first() {
            if gammas.iter().any(|g| g.len() != first.len()) {
                return invalid("coefficient vectors differ in length");
            }
        }
        Ok(Self { gammas })
    }

    pub fn zeros(num_internal: usize, dim: usize) -> Self {
        Self {
            gammas: vec![DVector::zeros(dim); num_internal],
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(tree: &TreeTopology, prior: &GammaPrior, rng: &mut R) -> Self {
        Self {
            gammas: (0..tree.num_internal()).map(|_| prior.sample(rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Coefficient dimension `R`, or `None` for a tree without internal nodes.
    pub fn dim(&self) -> Option<usize> {
        self.gammas.first().map(|g| g.len())
    }

    pub fn get(&self, node: usize) -> &DVector<f64> {
        &self.gammas[node]
    }

    pub fn set(&mut self, node: usize, gamma: DVector<f64>) {
        self.gammas[node] = gamma;
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.gammas.iter()
    }

    fn check(&self, tree: &TreeTopology, feats: &[f64]) -> Result<()> {
        if self.gammas.len() != tree.num_internal() {
            return invalid(format!(
                "{} coefficient vectors for {} internal nodes",
                self.gammas.len(),
                tree.num_internal()
            ));
        }
        if let Some(r) = self.dim() {
            if r != feats.len() {
                return invalid(format!(
                    "feature length {} does not match coefficient length {r}",
                    feats.len()
                ));
            }
        }
        Ok(())
    }

    /// Linear predictors `psi(x)' gamma_e` for every internal node.
    pub fn linear_predictors(&self, feats: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.gammas.iter().map(|g| dot(g.as_slice(), feats)));
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Splitting variable per internal node, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitValues(pub Vec<f64>);

/// Weight per leaf, in the tree's leaf order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn split_values(
    tree: &TreeTopology,
    coeffs: &SplitCoefficientSet,
    feats: &[f64],
) -> Result<SplitValues> {
    coeffs.check(tree, feats)?;
    let mut eta = Vec::new();
    coeffs.linear_predictors(feats, &mut eta);
    eta.iter().map(|&z| logistic(z)).collect::<Result<Vec<_>>>().map(SplitValues)
}

pub fn weights_from_splits(tree: &TreeTopology, v: &SplitValues) -> Result<WeightVector> {
    if v.0.len() != tree.num_internal() {
        return invalid(format!(
            "{} split values for {} internal nodes",
            v.0.len(),
            tree.num_internal()
        ));
    }
    if let Some(bad) = v.0.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return invalid(format!("split value {bad} outside [0, 1]"));
    }
    let mut log_w = vec![0.0; tree.num_leaves()];
    propagate_log_mass(tree, |i| (v.0[i].ln(), (-v.0[i]).ln_1p()), &mut log_w);
    Ok(WeightVector(log_w.into_iter().map(f64::exp).collect()))
}

/// Leaf weights at one covariate profile. Equivalent to `split_values`
/// followed by `weights_from_splits`, but works from the linear predictors so
/// that `ln V` and `ln(1 - V)` keep full precision in the tails.
pub fn weights_for_covariate(
    tree: &TreeTopology,
    coeffs: &SplitCoefficientSet,
    feats: &[f64],
) -> Result<WeightVector> {
    coeffs.check(tree, feats)?;
    let mut eta = Vec::new();
    coeffs.linear_predictors(feats, &mut eta);
    if eta.iter().any(|z| !z.is_finite()) {
        return invalid("non-finite linear predictor");
    }
    let mut log_w = vec![0.0; tree.num_leaves()];
    log_weights_from_eta(tree, &eta, &mut log_w);
    Ok(WeightVector(log_w.into_iter().map(f64::exp).collect()))
}

/// Log leaf weights from per-node linear predictors.
pub(crate) fn log_weights_from_eta(tree: &TreeTopology, eta: &[f64], out: &mut [f64]) {
    propagate_log_mass(tree, |i| (log_sigmoid(eta[i]), log_sigmoid(-eta[i])), out);
}

/// Pushes log stick mass from the root down. `split(i)` returns
/// `(ln V_i, ln(1 - V_i))` for internal node `i`.
fn propagate_log_mass<F: Fn(usize) -> (f64, f64)>(tree: &TreeTopology, split: F, out: &mut [f64]) {
    debug_assert_eq!(out.len(), tree.num_leaves());
    if tree.num_internal() == 0 {
        out[0] = 0.0;
        return;
    }
    let mut node_mass = vec![0.0; tree.num_internal()];
    // internal nodes are ordered by level, so parents are visited first
    for i in 0..tree.num_internal() {
        let (l, r) = split(i);
        let m = node_mass[i];
        for (child, piece) in tree.children(i).into_iter().zip([l, r]) {
            match child {
                Child::Internal(j) => node_mass[j] = m + piece,
                Child::Leaf(j) => out[j] = m + piece,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn logistic_basics() {
        assert_eq!(logistic(0.0).unwrap(), 0.5);
        assert!(close(logistic(40.0).unwrap(), 1.0, 1e-15));
        assert!(logistic(f64::NAN).is_err());
        assert!(logistic(f64::INFINITY).is_err());
        for z in [-30.0, -3.2, -0.1, 0.7, 12.0] {
            assert!(close(logistic(z).unwrap() + logistic(-z).unwrap(), 1.0, 1e-15));
        }
    }

    #[test]
    fn zero_coefficients_give_even_splits() {
        let t = TreeTopology::balanced(8).unwrap();
        let c = SplitCoefficientSet::zeros(t.num_internal(), 2);
        let v = split_values(&t, &c, &[1.0, 3.0]).unwrap();
        assert!(v.0.iter().all(|&x| x == 0.5));
        let w = weights_for_covariate(&t, &c, &[1.0, 3.0]).unwrap();
        assert!(w.0.iter().all(|&x| close(x, 0.125, 1e-15)));
    }

    #[test]
    fn intercept_only_inverse() {
        let t = TreeTopology::lopsided(2).unwrap();
        let logit = (0.7f64 / 0.3).ln();
        let c = SplitCoefficientSet::new(vec![DVector::from_element(1, logit)]).unwrap();
        let v = split_values(&t, &c, &[1.0]).unwrap();
        assert!(close(v.0[0], 0.7, 1e-15));

        let c0 = SplitCoefficientSet::new(vec![DVector::from_element(1, 0.0)]).unwrap();
        let w = weights_for_covariate(&t, &c0, &[1.0]).unwrap();
        assert_eq!(w.0, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_feature_ignores_coefficient() {
        let t = TreeTopology::lopsided(2).unwrap();
        let a = SplitCoefficientSet::new(vec![DVector::from_vec(vec![0.3, 5.0])]).unwrap();
        let b = SplitCoefficientSet::new(vec![DVector::from_vec(vec![0.3, -9.0])]).unwrap();
        let va = split_values(&t, &a, &[1.0, 0.0]).unwrap();
        let vb = split_values(&t, &b, &[1.0, 0.0]).unwrap();
        assert_eq!(va, vb);
        assert!(close(va.0[0], logistic(0.3).unwrap(), 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let t = TreeTopology::balanced(4).unwrap();
        let c = SplitCoefficientSet::zeros(3, 2);
        assert!(split_values(&t, &c, &[1.0]).is_err());
        assert!(weights_for_covariate(&t, &SplitCoefficientSet::zeros(2, 1), &[1.0]).is_err());
        assert!(weights_from_splits(&t, &SplitValues(vec![0.5, 0.5])).is_err());
        assert!(weights_from_splits(&t, &SplitValues(vec![0.5, 1.5, 0.5])).is_err());
    }

    #[test]
    fn lopsided_direct_product() {
        let t = TreeTopology::lopsided(4).unwrap();
        let w = weights_from_splits(&t, &SplitValues(vec![0.45, 0.6, 0.6])).unwrap();
        let expected = [0.45, 0.33, 0.132, 0.088];
        for (a, b) in w.0.iter().zip(expected) {
            assert!(close(*a, b, 1e-15), "{a} vs {b}");
        }
    }

    #[test]
    fn balanced_even_split() {
        let t = TreeTopology::balanced(4).unwrap();
        let w = weights_from_splits(&t, &SplitValues(vec![0.5; 3])).unwrap();
        assert_eq!(w.0, vec![0.25; 4]);
    }

    #[test]
    fn deep_lopsided_does_not_underflow_to_nan() {
        let t = TreeTopology::lopsided(200).unwrap();
        let w = weights_from_splits(&t, &SplitValues(vec![0.999; 199])).unwrap();
        assert!(w.0.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(close(w.0.iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn prior_sample_moments() {
        let prior = GammaPrior::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| prior.sample(&mut rng)).collect();
        let mean: DVector<f64> = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
        assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] + 2.0).abs() < 0.02);
        let cov01 = draws.iter().map(|d| (d[0] - mean[0]) * (d[1] - mean[1])).sum::<f64>() / n as f64;
        assert!((cov01 - 0.5).abs() < 0.03);
    }

    #[test]
    fn prior_rejects_bad_covariance() {
        let m = DVector::zeros(2);
        assert!(GammaPrior::new(m.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(GammaPrior::new(m.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(GammaPrior::new(m, DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn permuting_same_level_coefficients_permutes_blocks() {
        // swapping gamma_0 and gamma_1 in a depth-3 balanced tree swaps the
        // leaf blocks below nodes 0 and 1
        let t = TreeTopology::balanced(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prior = GammaPrior::isotropic(2, 0.0, 3.0).unwrap();
        let c = SplitCoefficientSet::sample_prior(&t, &prior, &mut rng);
        let i0 = t.internal_index(&"0".parse().unwrap()).unwrap();
        let i1 = t.internal_index(&"1".parse().unwrap()).unwrap();
        let mut swapped = c.clone();
        swapped.set(i0, c.get(i1).clone());
        swapped.set(i1, c.get(i0).clone());
        // the children of 0 and 1 move together
        for (a, b) in [("00", "10"), ("01", "11")] {
            let ia = t.internal_index(&a.parse().unwrap()).unwrap();
            let ib = t.internal_index(&b.parse().unwrap()).unwrap();
            swapped.set(ia, c.get(ib).clone());
            swapped.set(ib, c.get(ia).clone());
        }
        // an even root split makes the two halves exchangeable
        let mut c0 = c.clone();
        c0.set(0, DVector::zeros(2));
        swapped.set(0, DVector::zeros(2));
        let x = [1.0, 0.4];
        let w = weights_for_covariate(&t, &c0, &x).unwrap().0;
        let ws = weights_for_covariate(&t, &swapped, &x).unwrap().0;
        assert!(close(w[0], ws[4], 1e-15) && close(w[1], ws[5], 1e-15));
        assert!(close(w[2], ws[6], 1e-15) && close(w[3], ws[7], 1e-15));
        assert!(close(w[4], ws[0], 1e-15) && close(w[7], ws[3], 1e-15));
    }

    proptest! {
        #[test]
        fn weights_live_on_simplex(
            k in 1usize..40,
            balanced in any::<bool>(),
            seed in any::<u64>(),
            scale in 0.01f64..50.0,
        ) {
            let t = if balanced {
                TreeTopology::balanced(k.next_power_of_two()).unwrap()
            } else {
                TreeTopology::lopsided(k).unwrap()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prior = GammaPrior::isotropic(3, 0.0, scale).unwrap();
            let c = SplitCoefficientSet::sample_prior(&t, &prior, &mut rng);
            let x = [1.0, rng.random_range(-2.0..2.0), rng.random_range(0.0..1.0)];
            let w = weights_for_covariate(&t, &c, &x).unwrap();
            prop_assert!(w.0.iter().all(|&v| v >= 0.0));
            prop_assert!((w.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

            // both routes agree
            let v = split_values(&t, &c, &x).unwrap();
            let w2 = weights_from_splits(&t, &v).unwrap();
            for (a, b) in w.0.iter().zip(&w2.0) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn random_splits_sum_to_one(vals in proptest::collection::vec(0.0f64..=1.0, 1..64)) {
            let t = TreeTopology::lopsided(vals.len() + 1).unwrap();
            let w = weights_from_splits(&t, &SplitValues(vals)).unwrap();
            prop_assert!((w.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
