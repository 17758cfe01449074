//! Exact Pólya-Gamma sampling.
//!
//! `PG(1, z)` draws use Devroye's alternating-series accept/reject scheme on a
//! two-piece proposal (truncated inverse Gaussian below 0.64, truncated
//! exponential above), run on the `J*(1, z/2)` scale and divided by 4.
//! `PG(b, z)` for integer `b` is a sum of `b` independent `PG(1, z)` draws.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{invalid, Result};
use crate::stats::std_normal_cdf;

const TRUNC: f64 = 0.64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgParams {
    b: u32,
    z: f64,
}

impl PgParams {
    pub fn new(b: u32, z: f64) -> Result<Self> {
        if b == 0 {
            return invalid("Pólya-Gamma shape must be at least 1");
        }
        if !z.is_finite() {
            return invalid(format!("Pólya-Gamma tilt must be finite, got {z}"));
        }
        Ok(Self { b, z })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn z(&self) -> f64 {
        self.z
    }
}

pub fn sample_pg<R: Rng + ?Sized>(params: &PgParams, rng: &mut R) -> f64 {
    (0..params.b).map(|_| sample_pg1(params.z, rng)).sum()
}

/// `E[PG(b, z)] = b tanh(z/2) / (2z)`.
pub fn pg_mean(params: &PgParams) -> f64 {
    let b = params.b as f64;
    let z = params.z.abs();
    if z < 1e-8 {
        b / 4.0
    } else {
        b * (0.5 * z).tanh() / (2.0 * z)
    }
}

/// `Var[PG(b, z)] = b (sinh z - z) sech^2(z/2) / (4 z^3)`.
pub fn pg_variance(params: &PgParams) -> f64 {
    let b = params.b as f64;
    let z = params.z.abs();
    if z < 1e-3 {
        return b * (1.0 / 24.0 - z * z / 120.0);
    }
    let half = 0.5 * z;
    let sech2 = 1.0 / half.cosh().powi(2);
    b * (2.0 * half.tanh() - z * sech2) / (4.0 * z * z * z)
}

/// One draw from `PG(1, z)`.
pub fn sample_pg1<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let z = 0.5 * z.abs();
    let k = PI * PI / 8.0 + 0.5 * z * z;
    let log_p = (PI / (2.0 * k)).ln() - k * TRUNC;
    let log_q = std::f64::consts::LN_2 + log_ig_cdf_scaled(TRUNC, z);
    let prob_exp = 1.0 / (1.0 + (log_q - log_p).exp());

    loop {
        let x = if rng.random::<f64>() < prob_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        if accept(x, rng) {
            return 0.25 * x;
        }
    }
}

/// `ln[exp(-z) F_IG(t; 1/z, 1)]`, stable for large `z` and valid at `z = 0`.
fn log_ig_cdf_scaled(t: f64, z: f64) -> f64 {
    let rt = t.sqrt();
    let a = -z + log_std_normal_cdf((t * z - 1.0) / rt);
    let b = z + log_std_normal_cdf(-(t * z + 1.0) / rt);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_std_normal_cdf(x: f64) -> f64 {
    if x > -35.0 {
        return std_normal_cdf(x).ln();
    }
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
    -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
}

/// Inverse Gaussian with mean `1/z`, shape 1, truncated to `(0, TRUNC]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        loop {
            let mut e1: f64;
            loop {
                e1 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    break;
                }
            }
            let x = TRUNC / (1.0 + TRUNC * e1).powi(2);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = mu * n * n;
            let mut x = mu + 0.5 * mu * y - 0.5 * mu * (4.0 * y + y * y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}

/// Piecewise coefficient `a_n(x)` of the Jacobi-type alternating series.
fn series_term(n: u32, x: f64) -> f64 {
    let np = n as f64 + 0.5;
    if x <= TRUNC {
        (PI.ln() + np.ln() + 1.5 * (2.0 / (PI * x)).ln() - 2.0 * np * np / x).exp()
    } else {
        PI * np * (-np * np * PI * FRAC_PI_2 * x).exp()
    }
}

fn accept<R: Rng + ?Sized>(x: f64, rng: &mut R) -> bool {
    let mut s = series_term(0, x);
    let y = rng.random::<f64>() * s;
    let mut n = 0;
    loop {
        n += 1;
        let a = series_term(n, x);
        if n % 2 == 1 {
            s -= a;
            if y <= s {
                return true;
            }
        } else {
            s += a;
            if y > s {
                return false;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Moments;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Mean of `PG(1, z)` from its infinite sum-of-gammas representation.
    fn series_mean(z: f64) -> f64 {
        let c = z * z / (4.0 * PI * PI);
        (1..200_000)
            .map(|k| {
                let h = k as f64 - 0.5;
                1.0 / (h * h + c)
            })
            .sum::<f64>()
            / (2.0 * PI * PI)
    }

    #[test]
    fn mean_closed_form() {
        assert_eq!(pg_mean(&PgParams::new(1, 0.0).unwrap()), 0.25);
        let m = pg_mean(&PgParams::new(1, 2.0).unwrap());
        assert!((m - 1f64.tanh() / 4.0).abs() < 1e-15);
        assert!((m - 0.190_399).abs() < 1e-6);
        let m3 = pg_mean(&PgParams::new(3, 2.0).unwrap());
        assert!((m3 - 3.0 * m).abs() < 1e-15);
        for z in [0.0, 0.3, 2.0, 7.5] {
            let p = PgParams::new(1, z).unwrap();
            assert!((pg_mean(&p) - series_mean(z)).abs() < 1e-5, "z = {z}");
        }
    }

    #[test]
    fn variance_closed_form_is_continuous_at_zero() {
        let at = |z: f64| pg_variance(&PgParams::new(1, z).unwrap());
        assert!((at(0.0) - 1.0 / 24.0).abs() < 1e-15);
        assert!((at(0.999e-3) - at(1.001e-3)).abs() < 1e-9);
        assert!(at(800.0).is_finite() && at(800.0) > 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PgParams::new(0, 1.0).is_err());
        assert!(PgParams::new(1, f64::NAN).is_err());
    }

    #[test]
    fn draws_positive_and_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for z in [0.0, 0.1, 3.0, -12.0, 250.0] {
            for _ in 0..200 {
                let x = sample_pg1(z, &mut a);
                assert!(x > 0.0 && x.is_finite());
                assert_eq!(x.to_bits(), sample_pg1(z, &mut b).to_bits());
            }
        }
    }

    #[test]
    fn sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (b, z) in [(1u32, 0.0), (1, 2.0), (2, 1.5), (1, -3.0)] {
            let p = PgParams::new(b, z).unwrap();
            let mut acc = Moments::new(pg_mean(&p));
            for _ in 0..200_000 {
                acc.push(sample_pg(&p, &mut rng));
            }
            let err = (acc.mean() - pg_mean(&p)).abs();
            assert!(err < 3.5 * acc.se_mean(), "b={b} z={z}: {} vs {}", acc.mean(), pg_mean(&p));
        }
    }

    #[test]
    fn large_tilt_is_stable() {
        assert!(log_ig_cdf_scaled(TRUNC, 1e4).is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PgParams::new(1, 400.0).unwrap();
        let mut acc = Moments::new(0.0);
        for _ in 0..20_000 {
            acc.push(sample_pg(&p, &mut rng));
        }
        assert!((acc.mean() - pg_mean(&p)).abs() < 4.0 * acc.se_mean());
    }
}
