use std::path::{Path, PathBuf};

use treesb::data_io::load_truth_csv;
use treesb::diagnostics::{
    covariate_effect_differences, jaccard_per_draw, pointwise_ci, summarize_weights, IntervalSummary,
};
use treesb::gibbs::cost::{gibbs_cost_sum, lt_cost_bounds, lt_cost_equal};
use treesb::gibbs::trace::read_trace;
use treesb::{Error, Result, TreeKind};

use crate::moments::csv_err;
use crate::{out_path, parse_list, require_dir, require_file};

#[derive(clap::Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Reference clustering CSV (one `cluster` column).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Comma-separated features of the first profile for weight differences.
    #[arg(long, requires = "profile_b")]
    profile_a: Option<String>,
    #[arg(long, requires = "profile_a")]
    profile_b: Option<String>,
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn write_intervals(
    w: &mut csv::Writer<std::fs::File>,
    prefix: &[String],
    s: &IntervalSummary,
) -> Result<()> {
    for i in 0..s.len() {
        let mut rec = prefix.to_vec();
        rec.extend([
            i.to_string(),
            s.lower[i].to_string(),
            s.median[i].to_string(),
            s.upper[i].to_string(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    Ok(())
}

/// Writes `jaccard.csv` (with `--truth`), `weights_raw.csv`,
/// `weights_sorted.csv` and, with two profiles, `differences.csv`.
pub fn diagnose(a: DiagnoseArgs) -> Result<()> {
    require_file(&a.trace)?;
    require_dir(&a.out)?;
    let trace = read_trace(&a.trace)?;
    if !trace.complete {
        log::warn!("{} is an incomplete trace", a.trace.display());
    }
    let truth = match &a.truth {
        Some(p) => {
            require_file(p)?;
            Some(load_truth_csv(p)?)
        }
        None => None,
    };
    if let Some(t) = &truth {
        let jac = jaccard_per_draw(&trace, t)?;
        let mut w = writer(&out_path(&a.out, "jaccard.csv"))?;
        w.write_record(["draw", "jaccard"]).map_err(csv_err)?;
        for (d, j) in trace.draws.iter().zip(&jac) {
            w.write_record([d.draw.to_string(), j.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
    }

    let mut raw = writer(&out_path(&a.out, "weights_raw.csv"))?;
    raw.write_record(["profile", "leaf", "lower", "median", "upper"]).map_err(csv_err)?;
    let mut sorted = writer(&out_path(&a.out, "weights_sorted.csv"))?;
    sorted.write_record(["profile", "rank", "lower", "median", "upper"]).map_err(csv_err)?;
    for p in 0..trace.header.profiles.len() {
        let s = summarize_weights(&trace.weights_at_profile(p), a.level)?;
        if let Some(msg) = &s.warning {
            log::warn!("profile {p}: {msg}");
        }
        write_intervals(&mut raw, &[p.to_string()], &s.raw)?;
        write_intervals(&mut sorted, &[p.to_string()], &s.sorted)?;
    }
    raw.flush()?;
    sorted.flush()?;

    if let (Some(pa), Some(pb)) = (&a.profile_a, &a.profile_b) {
        let diffs = covariate_effect_differences(&trace, &parse_list(pa)?, &parse_list(pb)?)?;
        let s = pointwise_ci(&diffs, a.level)?;
        let mut w = writer(&out_path(&a.out, "differences.csv"))?;
        w.write_record(["leaf", "lower", "median", "upper"]).map_err(csv_err)?;
        write_intervals(&mut w, &[], &s)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(clap::Args)]
pub struct CostArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One row per draw: the ancestor-count sum, its value per observation, the
/// number of occupied leaves and the reference sums for both tree shapes.
pub fn cost(a: CostArgs) -> Result<()> {
    require_file(&a.trace)?;
    let trace = read_trace(&a.trace)?;
    let tree = trace.header.topology()?;
    let n = trace.header.n as u64;
    let out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["draw", "cost", "scaled", "occupied", "lt_min", "lt_max", "lt_equal", "bt"])
        .map_err(csv_err)?;
    let depth = if tree.kind() == TreeKind::Balanced {
        tree.num_leaves().trailing_zeros() as u64
    } else {
        (tree.num_leaves() as f64).log2().ceil() as u64
    };
    for d in &trace.draws {
        if d.allocations.iter().any(|&c| c >= tree.num_leaves()) {
            return Err(Error::Validation(format!("draw {} allocates outside the tree", d.draw)));
        }
        let c = gibbs_cost_sum(&tree, &d.allocations);
        let mut occupied = vec![false; tree.num_leaves()];
        d.allocations.iter().for_each(|&a| occupied[a] = true);
        let k_plus = occupied.iter().filter(|&&o| o).count() as u64;
        let (lo, hi) = lt_cost_bounds(n, k_plus);
        w.write_record([
            d.draw.to_string(),
            c.to_string(),
            (c as f64 / n.max(1) as f64).to_string(),
            k_plus.to_string(),
            lo.to_string(),
            hi.to_string(),
            lt_cost_equal(n, k_plus).to_string(),
            (n * depth).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
