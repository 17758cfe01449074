//! Work done by the coefficient step: every observation enters the update of
//! each ancestor of its leaf, so one sweep costs the total ancestor count.

use crate::tree::TreeTopology;

/// `sum_i |ancestors(c_i)|` for leaf-index allocations.
pub fn gibbs_cost_sum(tree: &TreeTopology, allocations: &[usize]) -> u64 {
    allocations.iter().map(|&a| tree.leaf_path(a).len() as u64).sum()
}

/// Smallest and largest lopsided-tree cost with `k_plus` occupied leaves
/// among the first `k_plus` leaves (leaf `k` has `k` ancestors). The minimum
/// packs all but `k_plus - 1` observations into the root's left child, the
/// maximum packs them into the deepest occupied leaf.
pub fn lt_cost_bounds(n: u64, k_plus: u64) -> (u64, u64) {
    let tri = k_plus * k_plus.saturating_sub(1) / 2;
    (n + tri, k_plus * (n + 1 - k_plus) + tri)
}

/// Lopsided-tree cost when `k_plus` leaves hold `n / k_plus` observations each.
pub fn lt_cost_equal(n: u64, k_plus: u64) -> f64 {
    n as f64 * (k_plus + 1) as f64 / 2.0
}

/// Balanced-tree cost for any allocation.
pub fn bt_cost(n: u64, num_leaves: usize) -> u64 {
    n * num_leaves.trailing_zeros() as u64
}
