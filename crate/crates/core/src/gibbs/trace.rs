//! Posterior traces and their newline-delimited JSON form.
//!
//! A trace file holds a header record, one record per draw and, when the run
//! finished or was stopped cleanly, an end marker carrying a completeness
//! flag. A file without an end marker is read back as incomplete.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::niw::Kernel;
use crate::error::{Error, Result};
use crate::tree::{NodeId, TreeKind, TreeTopology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub tree: TreeKind,
    pub leaves: Vec<NodeId>,
    pub internal: Vec<NodeId>,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    /// Covariate profiles at which draw weights are recorded.
    pub profiles: Vec<Vec<f64>>,
    pub chain: u64,
    pub seed: u64,
}

impl TraceHeader {
    pub fn topology(&self) -> Result<TreeTopology> {
        let t = TreeTopology::from_leaves(self.leaves.clone())?;
        if t.internal_nodes() != self.internal.as_slice() {
            return Err(Error::Validation("trace header internal nodes do not match its leaves".into()));
        }
        Ok(t)
    }
}

/// One retained posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub draw: usize,
    pub sweep: u64,
    /// Coefficients per internal node, in topology order.
    pub gamma: Vec<Vec<f64>>,
    pub kernels: Vec<Kernel>,
    /// Leaf index per observation.
    pub allocations: Vec<usize>,
    /// Weight vector per header profile.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTrace {
    pub header: TraceHeader,
    pub draws: Vec<Draw>,
    pub complete: bool,
}

impl PosteriorTrace {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            draws: Vec::new(),
            complete: false,
        }
    }

    /// Weight draws at one profile, `[draw][leaf]`.
    pub fn weights_at_profile(&self, profile: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.weights[profile].clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct KernelRecord {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DrawRecord {
    draw: usize,
    sweep: u64,
    gamma: BTreeMap<String, Vec<f64>>,
    kernels: BTreeMap<String, KernelRecord>,
    allocations: Vec<String>,
    weights: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Header(TraceHeader),
    Draw(DrawRecord),
    End { complete: bool, draws: usize },
}

fn to_record(header: &TraceHeader, d: &Draw) -> DrawRecord {
    DrawRecord {
        draw: d.draw,
        sweep: d.sweep,
        gamma: header.internal.iter().map(|n| n.to_string()).zip(d.gamma.iter().cloned()).collect(),
        kernels: header
            .leaves
            .iter()
            .zip(&d.kernels)
            .map(|(leaf, k)| {
                let c = k.cov();
                let cov = (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect();
                (leaf.to_string(), KernelRecord { mean: k.mean().to_vec(), cov })
            })
            .collect(),
        allocations: d.allocations.iter().map(|&a| header.leaves[a].to_string()).collect(),
        weights: d.weights.clone(),
    }
}

fn from_record(header: &TraceHeader, tree: &TreeTopology, mut rec: DrawRecord) -> Result<Draw> {
    let bad = |m: String| Error::Validation(format!("draw {}: {m}", rec.draw));
    let mut gamma = Vec::with_capacity(header.internal.len());
    for node in &header.internal {
        gamma.push(rec.gamma.remove(&node.to_string()).ok_or_else(|| bad(format!("missing gamma for node {node}")))?);
    }
    let mut kernels = Vec::with_capacity(header.leaves.len());
    for leaf in &header.leaves {
        let k = rec.kernels.remove(&leaf.to_string()).ok_or_else(|| bad(format!("missing kernel for leaf {leaf}")))?;
        let d = k.mean.len();
        if k.cov.len() != d || k.cov.iter().any(|row| row.len() != d) {
            return Err(bad(format!("kernel for leaf {leaf} has a malformed covariance")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| k.cov[i][j]);
        kernels.push(Kernel::new(k.mean, cov)?);
    }
    let allocations = rec
        .allocations
        .iter()
        .map(|s| {
            let id: NodeId = s.parse()?;
            tree.leaf_index(&id).ok_or_else(|| bad(format!("allocation {s} is not a leaf")))
        })
        .collect::<Result<Vec<_>>>()?;
    if allocations.len() != header.n {
        return Err(bad(format!("{} allocations for n = {}", allocations.len(), header.n)));
    }
    Ok(Draw {
        draw: rec.draw,
        sweep: rec.sweep,
        gamma,
        kernels,
        allocations,
        weights: rec.weights,
    })
}

/// Streams a trace to disk, flushing after every record so a running chain
/// can be inspected.
pub struct TraceWriter<W: Write = BufWriter<File>> {
    out: W,
    header: TraceHeader,
    draws: usize,
    finished: bool,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: TraceHeader) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, header: TraceHeader) -> Result<Self> {
        let mut w = Self {
            out,
            header,
            draws: 0,
            finished: false,
        };
        let rec = Record::Header(w.header.clone());
        w.write(&rec)?;
        Ok(w)
    }

    fn write(&mut self, rec: &Record) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn push(&mut self, draw: &Draw) -> Result<()> {
        let rec = Record::Draw(to_record(&self.header, draw));
        self.write(&rec)?;
        self.draws += 1;
        Ok(())
    }

    /// Writes the end marker and returns the underlying writer.
    pub fn finish(mut self, complete: bool) -> Result<W> {
        let rec = Record::End {
            complete,
            draws: self.draws,
        };
        self.write(&rec)?;
        self.finished = true;
        Ok(self.out)
    }

    pub fn draws_written(&self) -> usize {
        self.draws
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }
}

/// Serializes a whole in-memory trace.
pub fn write_trace<W: Write>(out: W, trace: &PosteriorTrace) -> Result<W> {
    let mut w = TraceWriter::new(out, trace.header.clone())?;
    for d in &trace.draws {
        w.push(d)?;
    }
    w.finish(trace.complete)
}

pub fn read_trace_from<R: BufRead>(input: R) -> Result<PosteriorTrace> {
    let mut lines = input.lines().enumerate();
    let parse = |line: usize, text: &str| -> Result<Record> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: line + 1,
            message: e.to_string(),
        })
    };
    let header = loop {
        match lines.next() {
            None => return Err(Error::Validation("trace is empty".into())),
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match parse(i, &line)? {
                    Record::Header(h) => break h,
                    _ => {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: "trace must start with a header record".into(),
                        })
                    }
                }
            }
        }
    };
    let tree = header.topology()?;
    let mut trace = PosteriorTrace::new(header);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse(i, &line)? {
            Record::Draw(rec) => {
                if trace.complete {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "draw after end marker".into(),
                    });
                }
                let d = from_record(&trace.header, &tree, rec)?;
                trace.draws.push(d);
            }
            Record::End { complete, draws } => {
                if draws != trace.draws.len() {
                    return Err(Error::Validation(format!(
                        "end marker counts {draws} draws but {} were read",
                        trace.draws.len()
                    )));
                }
                trace.complete = complete;
            }
            Record::Header(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "second header record".into(),
                })
            }
        }
    }
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<PosteriorTrace> {
    let f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    read_trace_from(BufReader::new(f))
}
