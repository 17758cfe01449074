use std::fs;
use std::path::PathBuf;

use treesb::data_io::{section4_design, write_csv, write_truth_csv};
use treesb::rng::{substream, tag};
use treesb::{Error, Result};

use crate::{out_path, require_dir};

#[derive(clap::Args)]
pub struct Args {
    /// Design name; only `section4` is built in.
    #[arg(long, default_value = "section4")]
    design: String,
    /// Count multiplier; every scaled cluster total must be an integer.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Use the covariate-dependent counts.
    #[arg(long)]
    dependent: bool,
    /// Keep this many leading clusters and pool the rest into one.
    #[arg(long)]
    merge_tail: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Writes `data.csv` and `truth.csv` into the output directory. Both files
/// are staged under temporary names and renamed only once both are written.
pub fn run(a: Args) -> Result<()> {
    require_dir(&a.out)?;
    if a.design != "section4" {
        return Err(Error::Config(format!("unknown design {:?}", a.design)));
    }
    let mut design = section4_design(a.scale, a.dependent)?;
    if let Some(keep) = a.merge_tail {
        design = design.merge_tail(keep)?;
    }
    let data = design.sample(&mut substream(a.seed, &[tag::SIMULATE]))?;
    let truth = data.truth().expect("synthetic data carries its clustering");

    let data_path = out_path(&a.out, "data.csv");
    let truth_path = out_path(&a.out, "truth.csv");
    let data_tmp = out_path(&a.out, ".data.csv.partial");
    let truth_tmp = out_path(&a.out, ".truth.csv.partial");
    let staged = write_csv(&data, &data_tmp).and_then(|_| write_truth_csv(truth, &truth_tmp));
    if let Err(e) = staged {
        let _ = fs::remove_file(&data_tmp);
        let _ = fs::remove_file(&truth_tmp);
        return Err(e);
    }
    fs::rename(&data_tmp, &data_path)?;
    fs::rename(&truth_tmp, &truth_path)?;
    log::info!("wrote {} observations to {}", data.n(), data_path.display());
    Ok(())
}
