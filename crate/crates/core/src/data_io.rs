//! Datasets, CSV input/output and synthetic data.
//!
//! A dataset CSV has a header `y1,..,yd,f1,..,fR` followed by one row per
//! observation: responses first, then covariate features `psi(x)`. Reference
//! clusterings live in a separate one-column CSV headed `cluster`.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    r: usize,
    y: Vec<f64>,
    feats: Vec<f64>,
    truth: Option<Vec<usize>>,
    profiles: Vec<Vec<f64>>,
    profile_of: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from row-major response and feature matrices.
    pub fn new(d: usize, r: usize, y: Vec<f64>, feats: Vec<f64>) -> Result<Self> {
        if d == 0 || r == 0 {
            return invalid("datasets need at least one response and one feature column");
        }
        if !y.len().is_multiple_of(d) || !feats.len().is_multiple_of(r) || y.len() / d != feats.len() / r {
            return invalid(format!(
                "response buffer of {} values (d = {d}) and feature buffer of {} values (R = {r}) disagree on n",
                y.len(),
                feats.len()
            ));
        }
        if y.iter().chain(&feats).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite value in dataset".into()));
        }
        let n = y.len() / d;
        let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut profiles = Vec::new();
        let mut profile_of = Vec::with_capacity(n);
        for i in 0..n {
            let row = &feats[i * r..(i + 1) * r];
            let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
            let idx = *lookup.entry(key).or_insert_with(|| {
                profiles.push(row.to_vec());
                profiles.len() - 1
            });
            profile_of.push(idx);
        }
        Ok(Self {
            d,
            r,
            y,
            feats,
            truth: None,
            profiles,
            profile_of,
        })
    }

    pub fn with_truth(mut self, truth: Vec<usize>) -> Result<Self> {
        if truth.len() != self.n() {
            return Err(Error::Validation(format!(
                "reference clustering has {} labels for {} observations",
                truth.len(),
                self.n()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i * self.d..(i + 1) * self.d]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.feats[i * self.r..(i + 1) * self.r]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    /// Mutable access to the response matrix; features and profiles are fixed.
    pub fn responses_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    pub fn truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    /// Distinct feature rows in order of first appearance.
    pub fn profiles(&self) -> &[Vec<f64>] {
        &self.profiles
    }

    pub fn profile_of(&self, i: usize) -> usize {
        self.profile_of[i]
    }

    /// Column means of the responses.
    pub fn response_mean(&self) -> Vec<f64> {
        let n = self.n().max(1) as f64;
        let mut m = vec![0.0; self.d];
        for row in self.y.chunks(self.d) {
            m.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Sample covariance of the responses (divisor `n - 1`).
    pub fn response_covariance(&self) -> DMatrix<f64> {
        let m = self.response_mean();
        let mut c = DMatrix::zeros(self.d, self.d);
        for row in self.y.chunks(self.d) {
            for a in 0..self.d {
                for b in 0..self.d {
                    c[(a, b)] += (row[a] - m[a]) * (row[b] - m[b]);
                }
            }
        }
        c / (self.n().saturating_sub(1).max(1) as f64)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Loads a dataset CSV (`y1..yd,f1..fR`).
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(csv_line(&e).max(1), e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Validation(format!("{} is empty", path.display())));
    }
    let d = header.iter().take_while(|h| h.starts_with('y')).count();
    let r = header.len() - d;
    for (j, h) in header.iter().enumerate() {
        let expected = if j < d { format!("y{}", j + 1) } else { format!("f{}", j - d + 1) };
        if h != expected {
            return Err(parse_err(1, format!("column {} is {h:?}, expected {expected:?}", j + 1)));
        }
    }
    if d == 0 || r == 0 {
        return Err(Error::Validation(
            "header needs response columns y1.. followed by feature columns f1..".into(),
        ));
    }
    let mut y = Vec::new();
    let mut feats = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("{field:?} in column {} is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("non-finite value {field:?} at line {line}")));
            }
            if j < d {
                y.push(v);
            } else {
                feats.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Validation(format!("{} has no observations", path.display())));
    }
    Dataset::new(d, r, y, feats)
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let header: Vec<String> = (1..=data.d())
        .map(|j| format!("y{j}"))
        .chain((1..=data.r()).map(|j| format!("f{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let fields: Vec<String> = data.y(i).iter().chain(data.features(i)).map(|v| v.to_string()).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_truth_csv(labels: &[usize], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "cluster")?;
    for l in labels {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_truth_csv(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "cluster" => {}
        _ => return Err(parse_err(1, "expected header \"cluster\"")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(i + 1, format!("{l:?} is not a cluster label")))
        })
        .collect()
}

/// Skew-normal generator component. `chol` is the lower-triangular factor of
/// the scale matrix, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewNormalComponent {
    loc: Vec<f64>,
    chol: Vec<f64>,
    skew: Vec<f64>,
}

impl SkewNormalComponent {
    pub fn new(loc: Vec<f64>, chol: Vec<f64>, skew: Vec<f64>) -> Result<Self> {
        let d = loc.len();
        if d == 0 || chol.len() != d * d || skew.len() != d {
            return invalid("component location, scale and skew dimensions disagree");
        }
        for a in 0..d {
            if !(chol[a * d + a] > 0.0) {
                return invalid("scale factor needs a positive diagonal");
            }
            if (a + 1..d).any(|b| chol[a * d + b] != 0.0) {
                return invalid("scale factor must be lower triangular");
            }
        }
        if loc.iter().chain(&chol).chain(&skew).any(|v| !v.is_finite()) {
            return invalid("non-finite component parameter");
        }
        Ok(Self { loc, chol, skew })
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn location(&self) -> &[f64] {
        &self.loc
    }

    pub fn shifted(&self, by: &[f64]) -> Self {
        let mut c = self.clone();
        c.loc.iter_mut().zip(by).for_each(|(a, b)| *a += b);
        c
    }
}

/// One draw by hidden truncation: per coordinate
/// `u = delta |z0| + sqrt(1 - delta^2) z1` with `delta = a / sqrt(1 + a^2)`,
/// then `y = loc + L u`.
pub fn sample_skew_normal<R: Rng + ?Sized>(c: &SkewNormalComponent, rng: &mut R) -> Vec<f64> {
    let d = c.dim();
    let u: Vec<f64> = c
        .skew
        .iter()
        .map(|&a| {
            let delta = a / (1.0 + a * a).sqrt();
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            delta * z0.abs() + (1.0 - delta * delta).sqrt() * z1
        })
        .collect();
    (0..d)
        .map(|a| c.loc[a] + (0..=a).map(|b| c.chol[a * d + b] * u[b]).sum::<f64>())
        .collect()
}

const DESIGN: &str = include_str!("../data/section4_design.csv");

/// Per-cluster base counts of the 20-component design; the full dataset has
/// eight times these per covariate profile.
pub const SECTION4_BASE: [u32; 20] = [200, 170, 130, 100, 80, 70, 50, 30, 28, 22, 20, 18, 16, 14, 12, 10, 9, 8, 7, 6];

/// The checked-in 20-component bivariate generator.
pub fn section4_components() -> Result<Vec<SkewNormalComponent>> {
    parse_design(DESIGN)
}

/// Parses a design file: header `component,loc1,loc2,l11,l21,l22,skew1,skew2`.
pub fn parse_design(text: &str) -> Result<Vec<SkewNormalComponent>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Validation("empty design file".into()))?;
    if header.trim() != "component,loc1,loc2,l11,l21,l22,skew1,skew2" {
        return Err(parse_err(1, "unexpected design header"));
    }
    lines
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(i + 1, format!("malformed design row {l:?}")))?;
            if v.len() != 8 {
                return Err(parse_err(i + 1, "design rows have 8 fields"));
            }
            SkewNormalComponent::new(vec![v[1], v[2]], vec![v[3], 0.0, v[4], v[5]], vec![v[6], v[7]])
        })
        .collect()
}

/// Counts per covariate profile and cluster for a synthetic design.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDesign {
    pub components: Vec<SkewNormalComponent>,
    /// Feature vector of each covariate profile.
    pub profiles: Vec<Vec<f64>>,
    /// `counts[x][j]`: observations from component `j` at profile `x`.
    pub counts: Vec<Vec<u32>>,
}

impl SyntheticDesign {
    pub fn cluster_totals(&self) -> Vec<u32> {
        (0..self.components.len())
            .map(|j| self.counts.iter().map(|c| c[j]).sum())
            .collect()
    }

    pub fn n(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }

    /// Keeps clusters `0..keep` and folds the remaining clusters' counts into
    /// one extra cluster generated by component `keep`.
    pub fn merge_tail(&self, keep: usize) -> Result<SyntheticDesign> {
        if keep == 0 || keep >= self.components.len() {
            return invalid(format!("cannot keep {keep} of {} clusters", self.components.len()));
        }
        let counts = self
            .counts
            .iter()
            .map(|c| {
                let mut row = c[..keep].to_vec();
                row.push(c[keep..].iter().sum());
                row
            })
            .collect();
        Ok(SyntheticDesign {
            components: self.components[..=keep].to_vec(),
            profiles: self.profiles.clone(),
            counts,
        })
    }

    /// Draws the dataset, grouped by profile then cluster, with the
    /// generating cluster as the reference label.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let d = self.components.first().map_or(1, |c| c.dim());
        let r = self.profiles.first().map_or(1, |p| p.len());
        let (mut y, mut feats, mut truth) = (Vec::new(), Vec::new(), Vec::new());
        for (x, row) in self.counts.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    y.extend(sample_skew_normal(&self.components[j], rng));
                    feats.extend_from_slice(&self.profiles[x]);
                    truth.push(j);
                }
            }
        }
        Dataset::new(d, r, y, feats)?.with_truth(truth)
    }
}

/// The eight profiles `(1, x1, x2, x3)` with `x` in `{0,1}^3`, in binary order.
pub fn section4_profiles() -> Vec<Vec<f64>> {
    (0..8)
        .map(|b| vec![1.0, ((b >> 2) & 1) as f64, ((b >> 1) & 1) as f64, (b & 1) as f64])
        .collect()
}

/// Counts of the 20-cluster design at a given scale. Each cluster's scaled
/// total must be an integer; it is split across the eight profiles by
/// largest remainder of the real-valued per-profile targets, with ties
/// broken cyclically so that leftover units rotate across profiles.
pub fn section4_design(scale: f64, dependent: bool) -> Result<SyntheticDesign> {
    if !(scale > 0.0 && scale.is_finite()) {
        return invalid(format!("scale must be positive, got {scale}"));
    }
    let profiles = section4_profiles();
    let nx = profiles.len();
    let mut counts = vec![vec![0u32; SECTION4_BASE.len()]; nx];
    let mut offset = 0usize;
    for (j, &base) in SECTION4_BASE.iter().enumerate() {
        let total_real = scale * (base as f64) * nx as f64;
        let total = total_real.round();
        if (total_real - total).abs() > 1e-9 * total_real.max(1.0) {
            return invalid(format!(
                "scale {scale} gives {total_real} observations for cluster {}, not an integer",
                j + 1
            ));
        }
        let targets: Vec<f64> = profiles
            .iter()
            .map(|p| scale * (base as f64 + if dependent { perturbation(p, j) } else { 0.0 }))
            .collect();
        if let Some(x) = targets.iter().position(|&t| t < 0.0) {
            return invalid(format!(
                "cluster {} has a negative count at profile {x} for scale {scale}",
                j + 1
            ));
        }
        let floors: Vec<u32> = targets.iter().map(|t| (t + 1e-9).floor() as u32).collect();
        let mut left = total as i64 - floors.iter().map(|&f| f as i64).sum::<i64>();
        let mut order: Vec<usize> = (0..nx).collect();
        let frac = |x: usize| targets[x] - floors[x] as f64;
        order.sort_by(|&a, &b| {
            frac(b)
                .partial_cmp(&frac(a))
                .unwrap()
                .then(((a + nx - offset) % nx).cmp(&((b + nx - offset) % nx)))
        });
        for x in 0..nx {
            counts[x][j] = floors[x];
        }
        let units = left.max(0) as usize;
        for &x in order.iter().take(units) {
            counts[x][j] += 1;
            left -= 1;
        }
        debug_assert_eq!(left, 0);
        offset = (offset + units) % nx;
    }
    Ok(SyntheticDesign {
        components: section4_components()?,
        profiles,
        counts,
    })
}

/// Covariate-dependent shifts: `20(2x1 - 1)(e8 - e5) + 20(2x2 - 1)(e10 - e6) + 20(2x3 - 1)(e9 - e7)`.
fn perturbation(profile: &[f64], cluster: usize) -> f64 {
    let s = |k: usize| 20.0 * (2.0 * profile[k] - 1.0);
    match cluster + 1 {
        8 => s(1),
        5 => -s(1),
        10 => s(2),
        6 => -s(2),
        9 => s(3),
        7 => -s(3),
        _ => 0.0,
    }
}

/// Synthetic dataset from the 20-cluster design.
pub fn generate_section4<R: Rng + ?Sized>(scale: f64, dependent: bool, rng: &mut R) -> Result<Dataset> {
    section4_design(scale, dependent)?.sample(rng)
}
