//! Small numerical helpers shared by the samplers and estimators.

use statrs::function::erf::erfc;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Univariate power sums up to fourth order, taken around a fixed shift so
/// that partial accumulators from independent streams can be merged exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    shift: f64,
    n: u64,
    s: [f64; 5],
}

impl Moments {
    pub fn new(shift: f64) -> Self {
        Self { shift, n: 0, s: [0.0; 5] }
    }

    pub fn push(&mut self, x: f64) {
        let u = x - self.shift;
        let mut p = 1.0;
        for s in &mut self.s {
            *s += p;
            p *= u;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Moments) {
        assert_eq!(self.shift, other.shift, "merging accumulators with different shifts");
        self.n += other.n;
        for (a, b) in self.s.iter_mut().zip(other.s) {
            *a += b;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.s[1] / self.n as f64
    }

    /// Central moment of order `k` (population normalization).
    pub fn central(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let m = self.s[1] / n;
        (0..=k)
            .map(|a| binom(k, a) * (-m).powi((k - a) as i32) * self.s[a] / n)
            .sum()
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        self.central(2) * n / (n - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Delta-method standard error of the sample variance.
    pub fn se_variance(&self) -> f64 {
        let m2 = self.central(2);
        ((self.central(4) - m2 * m2).max(0.0) / self.n as f64).sqrt()
    }
}

/// Bivariate power sums `sum u^i v^j` for `i + j <= 4` around a fixed shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateMoments {
    shift: (f64, f64),
    n: u64,
    s: [[f64; 5]; 5],
}

impl BivariateMoments {
    pub fn new(shift_x: f64, shift_y: f64) -> Self {
        Self {
            shift: (shift_x, shift_y),
            n: 0,
            s: [[0.0; 5]; 5],
        }
    }

    pub fn push(&mut self, x: f64, y: f64) {
        let u = x - self.shift.0;
        let v = y - self.shift.1;
        let mut pu = 1.0;
        for i in 0..5 {
            let mut pv = pu;
            for j in 0..5 - i {
                self.s[i][j] += pv;
                pv *= v;
            }
            pu *= u;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &BivariateMoments) {
        assert_eq!(self.shift, other.shift, "merging accumulators with different shifts");
        self.n += other.n;
        for i in 0..5 {
            for j in 0..5 - i {
                self.s[i][j] += other.s[i][j];
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn means(&self) -> (f64, f64) {
        let n = self.n as f64;
        (self.shift.0 + self.s[1][0] / n, self.shift.1 + self.s[0][1] / n)
    }

    /// Central cross moment `E[(x - mx)^i (y - my)^j]`, population normalization.
    pub fn central(&self, i: usize, j: usize) -> f64 {
        let n = self.n as f64;
        let mu = self.s[1][0] / n;
        let mv = self.s[0][1] / n;
        let mut acc = 0.0;
        for a in 0..=i {
            for b in 0..=j {
                acc += binom(i, a)
                    * binom(j, b)
                    * (-mu).powi((i - a) as i32)
                    * (-mv).powi((j - b) as i32)
                    * self.s[a][b]
                    / n;
            }
        }
        acc
    }

    /// Sample covariance with its standard error.
    pub fn covariance(&self) -> (f64, f64) {
        let n = self.n as f64;
        let c = self.central(1, 1);
        let se = ((self.central(2, 2) - c * c).max(0.0) / n).sqrt();
        (c * n / (n - 1.0), se)
    }

    /// Sample correlation with its influence-function standard error.
    /// Returns `None` when either margin has zero variance.
    pub fn correlation(&self) -> Option<(f64, f64)> {
        let m20 = self.central(2, 0);
        let m02 = self.central(0, 2);
        if m20 <= 0.0 || m02 <= 0.0 {
            return None;
        }
        let sx = m20.sqrt();
        let sy = m02.sqrt();
        let r = self.central(1, 1) / (sx * sy);
        let e22 = self.central(2, 2) / (m20 * m02);
        let e31 = self.central(3, 1) / (m20 * sx * sy);
        let e13 = self.central(1, 3) / (sx * m02 * sy);
        let e40 = self.central(4, 0) / (m20 * m20);
        let e04 = self.central(0, 4) / (m02 * m02);
        let v = e22 - r * (e31 + e13) + 0.25 * r * r * (e40 + 2.0 * e22 + e04);
        Some((r, (v.max(0.0) / self.n as f64).sqrt()))
    }
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
