use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use treesb::data_io::load_csv;
use treesb::gibbs::chain::run_chain_with;
use treesb::gibbs::trace::TraceWriter;
use treesb::gibbs::RunConfig;
use treesb::{Error, Result};

use crate::{out_path, require_dir, require_file};

#[derive(clap::Args)]
pub struct Args {
    /// Run configuration (`key = value` lines).
    #[arg(long, required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Rerun exactly what a previous `fit` recorded.
    #[arg(long, conflicts_with_all = ["config", "seed", "chains"])]
    manifest: Option<PathBuf>,
}

/// Everything needed to reproduce a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Canonical configuration text, seed included.
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub data: PathBuf,
    pub data_sha256: String,
    pub chains: u64,
    pub traces: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn trace_name(chain: u64) -> String {
    format!("trace-chain{chain}.ndjson")
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    require_file(path)?;
    let m: Manifest = serde_json::from_slice(&fs::read(path)?)?;
    if sha256_hex(m.config.as_bytes()) != m.config_sha256 {
        return Err(Error::Validation("manifest configuration does not match its hash".into()));
    }
    Ok(m)
}

pub fn run(a: Args) -> Result<()> {
    require_dir(&a.out)?;
    let (config, data_path, chains) = match &a.manifest {
        Some(mpath) => {
            let m = load_manifest(mpath)?;
            let cfg = RunConfig::parse(&m.config, None)?;
            let data = a.data.clone().unwrap_or(m.data.clone());
            require_file(&data)?;
            if sha256_hex(&fs::read(&data)?) != m.data_sha256 {
                return Err(Error::Validation(format!(
                    "{} differs from the data recorded in the manifest",
                    data.display()
                )));
            }
            (cfg, data, m.chains)
        }
        None => {
            let cpath = a.config.clone().expect("clap enforces --config without --manifest");
            require_file(&cpath)?;
            let data = a
                .data
                .clone()
                .ok_or_else(|| Error::InvalidArgument("--data is required without --manifest".into()))?;
            require_file(&data)?;
            let mut cfg = RunConfig::from_file(&cpath)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            (cfg, data, a.chains.unwrap_or(1))
        }
    };
    if chains == 0 {
        return Err(Error::InvalidArgument("--chains must be at least 1".into()));
    }
    config.validate()?;
    let data_bytes = fs::read(&data_path)?;
    let data = load_csv(&data_path)?;
    // surface configuration problems before any sampling
    config.model(&data)?;

    let text = config.to_text();
    let manifest = Manifest {
        config_sha256: sha256_hex(text.as_bytes()),
        config: text,
        seed: config.seed,
        data: fs::canonicalize(&data_path)?,
        data_sha256: sha256_hex(&data_bytes),
        chains,
        traces: (0..chains).map(trace_name).collect(),
    };
    fs::write(out_path(&a.out, "manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let work = || -> Result<()> {
        (0..chains).into_par_iter().try_for_each(|chain| {
            let model = config.model(&data)?;
            let header = treesb::gibbs::chain::trace_header(&model, &data, chain, config.seed);
            let mut writer = TraceWriter::create(&out_path(&a.out, &trace_name(chain)), header)?;
            let res = run_chain_with(&data, &config, chain, |d| writer.push(d));
            match res {
                Ok(t) => {
                    writer.finish(true)?;
                    log::info!("chain {chain}: {} draws", t.draws.len());
                    Ok(())
                }
                Err(e) => {
                    let _ = writer.finish(false);
                    Err(e)
                }
            }
        })
    };
    match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work),
        None => work(),
    }
}
