use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use treesb::prior_moments::{corr_closed_form_mc, lower_bound_bt, lower_bound_lt, mc_corr_measures, McPlan};
use treesb::stick_breaking::GammaPrior;
use treesb::{Result, TreeKind};

use crate::parse_list;

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 64)]
    num_leaves: usize,
    /// Comma-separated intercept variances.
    #[arg(long, default_value = "1")]
    sigma1_sq: String,
    /// Comma-separated slope-to-intercept variance ratios.
    #[arg(long, default_value = "0.01,0.1,1,10,100")]
    ratios: String,
    /// Monte-Carlo draws per row.
    #[arg(long, default_value_t = 20_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Correlation of `G_x(A)` and `G_x'(A)` for `psi(x) = (1, 0)`,
/// `psi(x') = (1, 1)` and coefficient covariance `diag(s1, s1 * ratio)`.
pub fn run(a: Args) -> Result<()> {
    let sigma1 = parse_list(&a.sigma1_sq)?;
    let ratios = parse_list(&a.ratios)?;
    let out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                crate::require_dir(dir)?;
            }
            Box::new(std::fs::File::create(p)?)
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tree",
        "K",
        "sigma1_sq",
        "sigma2_ratio",
        "corr_closed_form",
        "corr_mc",
        "mc_stderr",
        "lower_bound",
    ])
    .map_err(csv_err)?;
    let (fx, fxp) = ([1.0, 0.0], [1.0, 1.0]);
    let mut row = 0u64;
    for kind in [TreeKind::Lopsided, TreeKind::Balanced] {
        let bound = match kind {
            TreeKind::Lopsided => lower_bound_lt(a.num_leaves as u32),
            _ => lower_bound_bt(a.num_leaves.trailing_zeros()),
        };
        for &s1 in &sigma1 {
            for &ratio in &ratios {
                let prior = GammaPrior::new(
                    DVector::zeros(2),
                    DMatrix::from_diagonal(&DVector::from_vec(vec![s1, s1 * ratio])),
                )?;
                let plan = McPlan::new(treesb::rng::mix(a.seed, &[row]));
                row += 1;
                let closed = corr_closed_form_mc(kind, a.num_leaves, &prior, &fx, &fxp, a.n_mc, plan)?;
                let mc = mc_corr_measures(kind, a.num_leaves, &prior, &fx, &fxp, 0.5, a.n_mc, plan)?;
                w.write_record([
                    match kind {
                        TreeKind::Lopsided => "lt".to_string(),
                        _ => "bt".to_string(),
                    },
                    a.num_leaves.to_string(),
                    s1.to_string(),
                    ratio.to_string(),
                    closed.to_string(),
                    mc.value.to_string(),
                    mc.stderr.to_string(),
                    bound.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> treesb::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => treesb::Error::Io(io),
        other => treesb::Error::Validation(format!("{other:?}")),
    }
}
