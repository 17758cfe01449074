//! Post-processing of posterior draws: clustering distances, pointwise
//! intervals, post-hoc sorting against label switching, covariate effects
//! on the weights and variance decay along a lopsided tree.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::gibbs::PosteriorTrace;
use crate::stats::Moments;
use crate::stick_breaking::{weights_for_covariate, SplitCoefficientSet};
use crate::tree::TreeTopology;

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// One minus the Jaccard index of the co-clustered pair sets of `a` and `b`.
/// Two clusterings without any co-clustered pair are at distance 0.
pub fn jaccard_distance<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if a.len() != b.len() {
        return invalid(format!("clusterings have lengths {} and {}", a.len(), b.len()));
    }
    let mut ca: HashMap<&A, u64> = HashMap::new();
    let mut cb: HashMap<&B, u64> = HashMap::new();
    let mut cab: HashMap<(&A, &B), u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *cab.entry((x, y)).or_default() += 1;
    }
    let pa: u64 = ca.values().map(|&k| pairs(k)).sum();
    let pb: u64 = cb.values().map(|&k| pairs(k)).sum();
    let both: u64 = cab.values().map(|&k| pairs(k)).sum();
    let union = pa + pb - both;
    Ok(if union == 0 { 0.0 } else { 1.0 - both as f64 / union as f64 })
}

/// Jaccard distance of every draw's allocation to a reference clustering.
pub fn jaccard_per_draw(trace: &PosteriorTrace, truth: &[usize]) -> Result<Vec<f64>> {
    if truth.len() != trace.header.n {
        return Err(crate::Error::Validation(format!(
            "reference clustering has {} labels, trace has {} observations",
            truth.len(),
            trace.header.n
        )));
    }
    trace.draws.par_iter().map(|d| jaccard_distance(&d.allocations, truth)).collect()
}

/// Sorts each draw's weights in decreasing order, so index `k` is rank `k`.
pub fn posthoc_sort(draws: &[Vec<f64>]) -> Vec<Vec<f64>> {
    draws
        .iter()
        .map(|w| {
            let mut s = w.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        })
        .collect()
}

/// Equal-tailed pointwise intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSummary {
    pub level: f64,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntervalSummary {
    pub fn len(&self) -> usize {
        self.median.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median.is_empty()
    }

    pub fn contains(&self, index: usize, value: f64) -> bool {
        self.lower[index] <= value && value <= self.upper[index]
    }
}

/// 1-based order index `ceil(q n)`, guarded against `q n` landing a rounding
/// error above an integer.
fn order_index(q: f64, n: usize) -> usize {
    ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Pointwise intervals over `values[draw][index]` from order statistics: the
/// lower end is order statistic `ceil(alpha/2 n)`, the upper `ceil((1 - alpha/2) n)`
/// and the median `ceil(n/2)`, with `alpha = 1 - level`.
pub fn pointwise_ci(values: &[Vec<f64>], level: f64) -> Result<IntervalSummary> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("interval level {level} is outside (0, 1)"));
    }
    let n = values.len();
    if n < 2 {
        return invalid(format!("pointwise intervals need at least two draws, got {n}"));
    }
    let m = values[0].len();
    if values.iter().any(|v| v.len() != m) {
        return invalid("draws have different lengths");
    }
    let half = (1.0 - level) / 2.0;
    let (lo, mid, hi) = (order_index(half, n), order_index(0.5, n), order_index(1.0 - half, n));
    let mut out = IntervalSummary {
        level,
        lower: Vec::with_capacity(m),
        median: Vec::with_capacity(m),
        upper: Vec::with_capacity(m),
    };
    let mut col = vec![0.0; n];
    for j in 0..m {
        for (c, v) in col.iter_mut().zip(values) {
            *c = v[j];
        }
        col.sort_by(|a, b| a.total_cmp(b));
        out.lower.push(col[lo - 1]);
        out.median.push(col[mid - 1]);
        out.upper.push(col[hi - 1]);
    }
    Ok(out)
}

/// Raw and post-hoc sorted weight summaries at one covariate profile.
#[derive(Clone, Debug)]
pub struct WeightSummary {
    pub raw: IntervalSummary,
    pub sorted: IntervalSummary,
    /// Set when the sorted summary disagrees with the raw one by more than
    /// the interval widths allow, a sign that sorting is not a faithful
    /// relabeling for this posterior.
    pub warning: Option<String>,
}

/// Summarizes weight draws before and after post-hoc sorting. The raw
/// medians, put in decreasing order, are compared rank by rank with the
/// sorted medians; a gap larger than the two interval widths together
/// triggers a warning.
pub fn summarize_weights(draws: &[Vec<f64>], level: f64) -> Result<WeightSummary> {
    let raw = pointwise_ci(draws, level)?;
    let sorted = pointwise_ci(&posthoc_sort(draws), level)?;
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw.median[b].total_cmp(&raw.median[a]));
    let mut bad = Vec::new();
    for (rank, &leaf) in order.iter().enumerate() {
        let gap = (raw.median[leaf] - sorted.median[rank]).abs();
        let slack = (raw.upper[leaf] - raw.lower[leaf]) + (sorted.upper[rank] - sorted.lower[rank]);
        if gap > slack {
            bad.push(rank + 1);
        }
    }
    let warning = (!bad.is_empty()).then(|| {
        let msg = format!(
            "sorted and unsorted median weights disagree beyond interval widths at ranks {bad:?}; \
             post-hoc sorting relies on assumptions that may not hold here"
        );
        log::warn!("{msg}");
        msg
    });
    Ok(WeightSummary { raw, sorted, warning })
}

/// Per draw and leaf, `W_a - W_b` computed from the draw's coefficients at
/// feature vectors `a` and `b`.
pub fn covariate_effect_differences(trace: &PosteriorTrace, a: &[f64], b: &[f64]) -> Result<Vec<Vec<f64>>> {
    let r = trace.header.r;
    if a.len() != r || b.len() != r {
        return invalid(format!(
            "profiles have {} and {} features, the trace has R = {r}",
            a.len(),
            b.len()
        ));
    }
    let tree = trace.header.topology()?;
    trace
        .draws
        .par_iter()
        .map(|d| {
            let coeffs = SplitCoefficientSet::new(d.gamma.iter().map(|g| g.clone().into()).collect())?;
            let wa = weights_for_covariate(&tree, &coeffs, a)?;
            let wb = weights_for_covariate(&tree, &coeffs, b)?;
            Ok(wa.0.iter().zip(&wb.0).map(|(x, y)| x - y).collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceDecayRow {
    pub leaf: usize,
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    /// `prod E(1 - V)^2` over the nodes where the path to the leaf turns
    /// right, from empirical split moments. Present for lopsided trees only.
    pub bound: Option<f64>,
    pub bound_se: Option<f64>,
}

/// Empirical weight variances per leaf next to the remaining-stick bound
/// `Var W_k <= E W_k^2 <= E R_{k-1}^2 = prod_{l<k} E(1 - V_l)^2`, which holds
/// when splits at different nodes are independent. `weights[draw][leaf]` and
/// `splits[draw][node]` come from the same draws.
pub fn variance_decay_report(
    tree: &TreeTopology,
    weights: &[Vec<f64>],
    splits: &[Vec<f64>],
) -> Result<Vec<VarianceDecayRow>> {
    if weights.len() != splits.len() || weights.is_empty() {
        return invalid("variance decay needs equally many weight and split draws, at least one");
    }
    let k = tree.num_leaves();
    if weights.iter().any(|w| w.len() != k) || splits.iter().any(|s| s.len() != tree.num_internal()) {
        return invalid("draw lengths do not match the tree");
    }
    let mut w_acc: Vec<Moments> = (0..k).map(|_| Moments::new(1.0 / k as f64)).collect();
    let mut r_acc: Vec<Moments> = (0..tree.num_internal()).map(|_| Moments::new(0.5)).collect();
    for (w, s) in weights.iter().zip(splits) {
        for (acc, &x) in w_acc.iter_mut().zip(w) {
            acc.push(x);
        }
        for (acc, &v) in r_acc.iter_mut().zip(s) {
            acc.push((1.0 - v) * (1.0 - v));
        }
    }
    let lopsided = tree.kind() == crate::tree::TreeKind::Lopsided;
    Ok((0..k)
        .map(|leaf| {
            let (bound, bound_se) = if lopsided {
                let mut b = 1.0;
                let mut rel2 = 0.0;
                for step in tree.leaf_path(leaf).iter().filter(|s| s.right) {
                    let m = r_acc[step.node].mean();
                    b *= m;
                    if m > 0.0 {
                        rel2 += (r_acc[step.node].se_mean() / m).powi(2);
                    }
                }
                (Some(b), Some(b * rel2.sqrt()))
            } else {
                (None, None)
            };
            VarianceDecayRow {
                leaf,
                mean: w_acc[leaf].mean(),
                variance: w_acc[leaf].variance(),
                variance_se: w_acc[leaf].se_variance(),
                bound,
                bound_se,
            }
        })
        .collect())
}
