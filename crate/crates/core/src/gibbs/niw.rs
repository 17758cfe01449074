//! Gaussian kernels and their Normal-Inverse-Wishart base measure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate Gaussian kernel with a cached Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    /// Lower Cholesky factor, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

impl Kernel {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return invalid("kernel mean and covariance dimensions differ");
        }
        let l = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("kernel covariance is not positive definite".into()))?
            .l();
        let chol: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        let log_det_half: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
        Ok(Self {
            mean,
            cov,
            chol,
            log_norm: -0.5 * d as f64 * LN_2PI - log_det_half,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `ln N(y; mean, cov)`. `scratch` must hold `d` values.
    #[inline]
    pub fn log_density(&self, y: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut q = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let mut v = y[i] - self.mean[i];
            for (l, z) in row.iter().zip(scratch.iter()) {
                v -= l * z;
            }
            let z = v / self.chol[i * d + i];
            scratch[i] = z;
            q += z * z;
        }
        self.log_norm - 0.5 * q
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum::<f64>())
            .collect()
    }
}

/// Count, mean and scatter matrix of the observations in one leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafStats {
    pub count: usize,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

impl LeafStats {
    pub fn empty(d: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }

    /// Two-pass statistics over `rows`.
    pub fn from_rows<'a, I>(d: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut s = Self::empty(d);
        for y in rows.clone() {
            s.count += 1;
            for a in 0..d {
                s.mean[a] += y[a];
            }
        }
        if s.count == 0 {
            return s;
        }
        s.mean /= s.count as f64;
        for y in rows {
            for a in 0..d {
                let da = y[a] - s.mean[a];
                for b in 0..=a {
                    s.scatter[(a, b)] += da * (y[b] - s.mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                s.scatter[(b, a)] = s.scatter[(a, b)];
            }
        }
        s
    }
}

/// `NIW(m0, kappa0, nu0, psi0)`: `Sigma ~ IW(nu0, psi0)`, `mu | Sigma ~ N(m0, Sigma / kappa0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NiwPrior {
    m0: DVector<f64>,
    kappa0: f64,
    nu0: f64,
    psi0: DMatrix<f64>,
    psi_chol: DMatrix<f64>,
}

impl NiwPrior {
    pub fn new(m0: DVector<f64>, kappa0: f64, nu0: f64, psi0: DMatrix<f64>) -> Result<Self> {
        let d = m0.len();
        if d == 0 || psi0.nrows() != d || psi0.ncols() != d {
            return invalid("hyperprior location and scale dimensions differ");
        }
        if !(kappa0 > 0.0 && kappa0.is_finite()) {
            return invalid(format!("kappa0 = {kappa0} must be positive"));
        }
        if !(nu0 > d as f64 - 1.0) {
            return invalid(format!("nu0 = {nu0} must exceed d - 1 = {}", d - 1));
        }
        let psi_chol = psi0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("psi0 is not positive definite".into()))?
            .l();
        Ok(Self {
            m0,
            kappa0,
            nu0,
            psi0,
            psi_chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn m0(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn psi0(&self) -> &DMatrix<f64> {
        &self.psi0
    }

    /// Conditional given leaf statistics, each observation weighted by `zeta`.
    pub fn posterior(&self, stats: &LeafStats, zeta: f64) -> Result<NiwPrior> {
        if stats.count == 0 {
            return Ok(self.clone());
        }
        let d = self.dim() as f64;
        let n = zeta * stats.count as f64;
        let kappa = self.kappa0 + n;
        let nu = self.nu0 + n;
        if nu <= d - 1.0 {
            return Err(Error::Config(format!(
                "posterior degrees of freedom {nu} do not exceed d - 1; the hyperprior is too weak"
            )));
        }
        let diff = &stats.mean - &self.m0;
        let m = (&self.m0 * self.kappa0 + &stats.mean * n) / kappa;
        let mut psi = &self.psi0 + &stats.scatter * zeta + &diff * diff.transpose() * (self.kappa0 * n / kappa);
        psi = (&psi + psi.transpose()) * 0.5;
        let psi_chol = psi
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("posterior scale matrix is not positive definite".into()))?
            .l();
        Ok(NiwPrior {
            m0: m,
            kappa0: kappa,
            nu0: nu,
            psi0: psi,
            psi_chol,
        })
    }

    /// Draws `(mu, Sigma)` using the Bartlett decomposition for the
    /// inverse-Wishart part.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Kernel> {
        let d = self.dim();
        let mut a = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(self.nu0 - i as f64)
                .map_err(|e| Error::Numerical(format!("chi-squared draw: {e}")))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        // Sigma^{-1} = L^{-T} A A^T L^{-1}, so Sigma = (L A^{-T}) (L A^{-T})^T
        let a_inv = a
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
        let b = &self.psi_chol * a_inv.transpose();
        let mut sigma = &b * b.transpose();
        sigma = (&sigma + sigma.transpose()) * 0.5;
        let l = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("sampled covariance is not positive definite".into()))?
            .l();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let mu = &self.m0 + l * z / self.kappa0.sqrt();
        Kernel::new(mu.iter().copied().collect(), sigma)
    }
}
