//! Run configuration: a flat `key = value` file with `#` comments.
//!
//! ```text
//! tree = balanced
//! num_leaves = 16
//! sigma_gamma_scale = 10
//! zeta = 1
//! burn_in = 1000
//! thin = 10
//! n_draws = 500
//! seed = 42
//! ```
//!
//! Vectors are comma separated; matrices separate rows with `;`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::gibbs::niw::NiwPrior;
use crate::stick_breaking::GammaPrior;
use crate::tree::{TreeKind, TreeTopology};

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Prior covariance of the split coefficients.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaGamma {
    Scale(f64),
    Matrix(DMatrix<f64>),
}

/// A hyperparameter that defaults to a statistic of the data.
#[derive(Clone, Debug, PartialEq)]
pub enum FromData<T> {
    Data,
    Value(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// k-means++ allocations over half the leaves, atoms from their conditional.
    KMeans,
    /// Coefficients and atoms drawn from the prior.
    Prior,
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(InitKind::KMeans),
            "prior" => Ok(InitKind::Prior),
            other => config_err(format!("unknown init {other:?}; expected kmeans or prior")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub tree: TreeKind,
    pub num_leaves: usize,
    pub mu_gamma: Vec<f64>,
    pub sigma_gamma: SigmaGamma,
    pub m0: FromData<Vec<f64>>,
    pub kappa0: f64,
    /// Defaults to `d + 2`.
    pub nu0: Option<f64>,
    pub psi0: FromData<DMatrix<f64>>,
    /// Multiplies `psi0`.
    pub psi0_scale: f64,
    pub zeta: f64,
    pub burn_in: usize,
    pub thin: usize,
    pub n_draws: usize,
    pub seed: u64,
    pub init: InitKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tree: TreeKind::Balanced,
            num_leaves: 16,
            mu_gamma: vec![0.0],
            sigma_gamma: SigmaGamma::Scale(10.0),
            m0: FromData::Data,
            kappa0: 0.01,
            nu0: None,
            psi0: FromData::Data,
            psi0_scale: 1.0,
            zeta: 1.0,
            burn_in: 1000,
            thin: 10,
            n_draws: 1000,
            seed: 0,
            init: InitKind::KMeans,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key} = {v:?} is not a valid number")))
}

fn parse_vec(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_num(key, x.trim())).collect()
}

fn parse_matrix(key: &str, v: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = v
        .split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| parse_vec(key, r))
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return config_err(format!("{key} must be a square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Reads a whitespace- or comma-separated square matrix file.
fn read_matrix_file(key: &str, path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{key}: cannot read {}: {e}", path.display())))?;
    let joined: Vec<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(","))
        .collect();
    parse_matrix(key, &joined.join(";"))
}

fn format_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    (0..m.nrows())
        .map(|i| format_vec(&m.row(i).iter().copied().collect::<Vec<_>>()))
        .collect::<Vec<_>>()
        .join(";")
}

impl RunConfig {
    /// Parses configuration text. Relative `sigma_gamma_file` paths resolve
    /// against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return config_err(format!("line {}: duplicate key {k}", i + 1));
            }
        }

        let mut c = RunConfig::default();
        let mut sigma_seen = false;
        for (k, v) in &entries {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "tree" => {
                    c.tree = v.parse().map_err(|_| Error::Config(format!("unknown tree {v:?}")))?;
                    if c.tree == TreeKind::Custom {
                        return config_err("the sampler supports lopsided and balanced trees only");
                    }
                }
                "num_leaves" => c.num_leaves = parse_num(k, v)?,
                "mu_gamma" => c.mu_gamma = parse_vec(k, v)?,
                "sigma_gamma_scale" | "sigma_gamma" | "sigma_gamma_file" => {
                    if sigma_seen {
                        return config_err("give only one of sigma_gamma_scale, sigma_gamma, sigma_gamma_file");
                    }
                    sigma_seen = true;
                    c.sigma_gamma = match k {
                        "sigma_gamma_scale" => SigmaGamma::Scale(parse_num(k, v)?),
                        "sigma_gamma" => SigmaGamma::Matrix(parse_matrix(k, v)?),
                        _ => {
                            let p = Path::new(v);
                            let p = match base_dir {
                                Some(b) if p.is_relative() => b.join(p),
                                _ => p.to_path_buf(),
                            };
                            SigmaGamma::Matrix(read_matrix_file(k, &p)?)
                        }
                    };
                }
                "m0" => c.m0 = if v == "data" { FromData::Data } else { FromData::Value(parse_vec(k, v)?) },
                "kappa0" => c.kappa0 = parse_num(k, v)?,
                "nu0" => c.nu0 = Some(parse_num(k, v)?),
                "psi0" => c.psi0 = if v == "data" { FromData::Data } else { FromData::Value(parse_matrix(k, v)?) },
                "psi0_scale" => c.psi0_scale = parse_num(k, v)?,
                "zeta" => c.zeta = parse_num(k, v)?,
                "burn_in" => c.burn_in = parse_num(k, v)?,
                "thin" => c.thin = parse_num(k, v)?,
                "n_draws" => c.n_draws = parse_num(k, v)?,
                "seed" => c.seed = parse_num(k, v)?,
                "init" => c.init = v.parse()?,
                other => return config_err(format!("unknown key {other:?}")),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.tree == TreeKind::Custom {
            return config_err("the sampler supports lopsided and balanced trees only");
        }
        TreeTopology::build(self.tree, self.num_leaves).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return config_err(format!("zeta = {} is outside (0, 1]", self.zeta));
        }
        if self.thin == 0 {
            return config_err("thin must be at least 1");
        }
        if self.n_draws == 0 {
            return config_err("n_draws must be at least 1");
        }
        if !(self.kappa0 > 0.0) {
            return config_err("kappa0 must be positive");
        }
        if !(self.psi0_scale > 0.0) {
            return config_err("psi0_scale must be positive");
        }
        if self.mu_gamma.is_empty() {
            return config_err("mu_gamma is empty");
        }
        if let SigmaGamma::Scale(s) = self.sigma_gamma {
            if !(s > 0.0) {
                return config_err("sigma_gamma_scale must be positive");
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tree = {}", self.tree);
        let _ = writeln!(s, "num_leaves = {}", self.num_leaves);
        let _ = writeln!(s, "mu_gamma = {}", format_vec(&self.mu_gamma));
        match &self.sigma_gamma {
            SigmaGamma::Scale(v) => writeln!(s, "sigma_gamma_scale = {v}"),
            SigmaGamma::Matrix(m) => writeln!(s, "sigma_gamma = {}", format_matrix(m)),
        }
        .ok();
        match &self.m0 {
            FromData::Data => writeln!(s, "m0 = data"),
            FromData::Value(v) => writeln!(s, "m0 = {}", format_vec(v)),
        }
        .ok();
        let _ = writeln!(s, "kappa0 = {}", self.kappa0);
        if let Some(nu) = self.nu0 {
            let _ = writeln!(s, "nu0 = {nu}");
        }
        match &self.psi0 {
            FromData::Data => writeln!(s, "psi0 = data"),
            FromData::Value(m) => writeln!(s, "psi0 = {}", format_matrix(m)),
        }
        .ok();
        let _ = writeln!(s, "psi0_scale = {}", self.psi0_scale);
        let _ = writeln!(s, "zeta = {}", self.zeta);
        let _ = writeln!(s, "burn_in = {}", self.burn_in);
        let _ = writeln!(s, "thin = {}", self.thin);
        let _ = writeln!(s, "n_draws = {}", self.n_draws);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "init = {}",
            match self.init {
                InitKind::KMeans => "kmeans",
                InitKind::Prior => "prior",
            }
        );
        s
    }

    /// Resolves data-dependent defaults and builds the model.
    pub fn model(&self, data: &Dataset) -> Result<Model> {
        self.validate()?;
        let tree = TreeTopology::build(self.tree, self.num_leaves)?;
        let r = data.r();
        let mu = match self.mu_gamma.len() {
            1 => DVector::from_element(r, self.mu_gamma[0]),
            len if len == r => DVector::from_vec(self.mu_gamma.clone()),
            len => return config_err(format!("mu_gamma has {len} entries for {r} features")),
        };
        let sigma = match &self.sigma_gamma {
            SigmaGamma::Scale(s) => DMatrix::from_diagonal_element(r, r, *s),
            SigmaGamma::Matrix(m) if m.nrows() == r => m.clone(),
            SigmaGamma::Matrix(m) => {
                return config_err(format!("sigma_gamma is {0}x{0} for {r} features", m.nrows()))
            }
        };
        let gamma_prior = GammaPrior::new(mu, sigma).map_err(|e| Error::Config(e.to_string()))?;

        let d = data.d();
        let m0 = match &self.m0 {
            FromData::Data => {
                if data.n() == 0 {
                    return config_err("m0 = data needs observations");
                }
                DVector::from_vec(data.response_mean())
            }
            FromData::Value(v) if v.len() == d => DVector::from_vec(v.clone()),
            FromData::Value(v) => return config_err(format!("m0 has {} entries for d = {d}", v.len())),
        };
        let psi0 = match &self.psi0 {
            FromData::Data => {
                if data.n() < 2 {
                    return config_err("psi0 = data needs at least two observations");
                }
                data.response_covariance()
            }
            FromData::Value(m) if m.nrows() == d => m.clone(),
            FromData::Value(m) => return config_err(format!("psi0 is {0}x{0} for d = {d}", m.nrows())),
        } * self.psi0_scale;
        let nu0 = self.nu0.unwrap_or(d as f64 + 2.0);
        let hyper = NiwPrior::new(m0, self.kappa0, nu0, psi0).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        })?;
        Ok(Model {
            tree,
            gamma_prior,
            hyper,
            zeta: self.zeta,
        })
    }
}

/// Everything a sweep needs besides the state and the data.
#[derive(Clone, Debug)]
pub struct Model {
    pub tree: TreeTopology,
    pub gamma_prior: GammaPrior,
    pub hyper: NiwPrior,
    pub zeta: f64,
}
