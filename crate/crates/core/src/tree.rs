//! Finite binary tree topologies for stick-breaking.
//!
//! Nodes are addressed by bit strings: the root is the empty string, and each
//! digit records whether the path goes to the left (0) or right (1) child.
//! Leaves are kept in left-to-right order, so the leaves below any internal
//! node form a contiguous index range whose first part descends from the left
//! child.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Bit-string address of a tree node. The empty string is the root.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    bits: Vec<u8>,
}

impl NodeId {
    pub fn root() -> Self {
        Self { bits: Vec::new() }
    }

    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Result<Self> {
        let bits: Vec<u8> = bits.into_iter().collect();
        if bits.iter().any(|&b| b > 1) {
            return invalid("node bits must be 0 or 1");
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Tree level; the root sits at level 0.
    pub fn level(&self) -> usize {
        self.bits.len()
    }

    pub fn is_root(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn child(&self, digit: u8) -> NodeId {
        debug_assert!(digit <= 1);
        let mut bits = self.bits.clone();
        bits.push(digit);
        NodeId { bits }
    }

    pub fn parent(&self) -> Option<NodeId> {
        if self.bits.is_empty() {
            None
        } else {
            Some(NodeId {
                bits: self.bits[..self.bits.len() - 1].to_vec(),
            })
        }
    }

    /// True when `self` is a (not necessarily proper) prefix of `other`.
    pub fn is_prefix_of(&self, other: &NodeId) -> bool {
        other.bits.starts_with(&self.bits)
    }

    fn prefix(&self, len: usize) -> NodeId {
        NodeId {
            bits: self.bits[..len].to_vec(),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bits.is_empty() {
            return f.write_str("root");
        }
        for b in &self.bits {
            f.write_str(if *b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "root" || s.is_empty() {
            return Ok(NodeId::root());
        }
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::InvalidArgument(format!(
                    "invalid node digit {other:?} in {s:?}"
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(NodeId { bits })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Lopsided,
    Balanced,
    Custom,
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeKind::Lopsided => "lopsided",
            TreeKind::Balanced => "balanced",
            TreeKind::Custom => "custom",
        })
    }
}

impl FromStr for TreeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lopsided" | "lt" => Ok(TreeKind::Lopsided),
            "balanced" | "bt" => Ok(TreeKind::Balanced),
            "custom" => Ok(TreeKind::Custom),
            other => invalid(format!("unknown tree kind {other:?}")),
        }
    }
}

/// Child slot of an internal node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Internal(usize),
    Leaf(usize),
}

/// One step on a root-to-leaf path: the internal node index and the branch taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathStep {
    pub node: usize,
    pub right: bool,
}

/// Leaf index ranges below an internal node: `lo..mid` descend from the left
/// child, `mid..hi` from the right child.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafSpan {
    pub lo: usize,
    pub mid: usize,
    pub hi: usize,
}

#[derive(Clone, Debug)]
pub struct TreeTopology {
    kind: TreeKind,
    internal: Vec<NodeId>,
    leaves: Vec<NodeId>,
    internal_lookup: HashMap<NodeId, usize>,
    leaf_lookup: HashMap<NodeId, usize>,
    children: Vec<[Child; 2]>,
    spans: Vec<LeafSpan>,
    leaf_paths: Vec<Vec<PathStep>>,
}

impl TreeTopology {
    /// Traditional stick-breaking: only the right piece is broken again.
    pub fn lopsided(num_leaves: usize) -> Result<Self> {
        if num_leaves == 0 {
            return invalid("number of leaves must be at least 1");
        }
        let mut leaves = Vec::with_capacity(num_leaves);
        if num_leaves == 1 {
            leaves.push(NodeId::root());
        } else {
            for k in 0..num_leaves - 1 {
                let mut bits = vec![1u8; k];
                bits.push(0);
                leaves.push(NodeId { bits });
            }
            leaves.push(NodeId {
                bits: vec![1u8; num_leaves - 1],
            });
        }
        Self::assemble(TreeKind::Lopsided, leaves)
    }

    /// Every piece is broken at every level down to depth `log2(num_leaves)`.
    pub fn balanced(num_leaves: usize) -> Result<Self> {
        if num_leaves == 0 || !num_leaves.is_power_of_two() {
            return invalid(format!(
                "balanced tree needs a power-of-two number of leaves, got {num_leaves}"
            ));
        }
        let depth = num_leaves.trailing_zeros() as usize;
        let leaves = (0..num_leaves)
            .map(|i| NodeId {
                bits: (0..depth)
                    .map(|l| ((i >> (depth - 1 - l)) & 1) as u8)
                    .collect(),
            })
            .collect();
        Self::assemble(TreeKind::Balanced, leaves)
    }

    pub fn build(kind: TreeKind, num_leaves: usize) -> Result<Self> {
        match kind {
            TreeKind::Lopsided => Self::lopsided(num_leaves),
            TreeKind::Balanced => Self::balanced(num_leaves),
            TreeKind::Custom => invalid("custom trees are built from an explicit leaf set"),
        }
    }

    /// Builds a custom topology from its leaf set. The leaves must form a
    /// complete prefix-free code.
    pub fn from_leaves(leaves: Vec<NodeId>) -> Result<Self> {
        Self::assemble(TreeKind::Custom, leaves)
    }

    fn assemble(kind: TreeKind, mut leaves: Vec<NodeId>) -> Result<Self> {
        if leaves.is_empty() {
            return invalid("a tree needs at least one leaf");
        }
        leaves.sort();
        for pair in leaves.windows(2) {
            if pair[0].is_prefix_of(&pair[1]) {
                return invalid(format!(
                    "leaf {} is an ancestor of (or equal to) leaf {}",
                    pair[0], pair[1]
                ));
            }
        }

        let mut internal_set = BTreeSet::new();
        for leaf in &leaves {
            for len in 0..leaf.level() {
                internal_set.insert(leaf.prefix(len));
            }
        }
        let mut internal: Vec<NodeId> = internal_set.into_iter().collect();
        internal.sort_by(|a, b| a.level().cmp(&b.level()).then_with(|| a.cmp(b)));

        let internal_lookup: HashMap<NodeId, usize> = internal
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let leaf_lookup: HashMap<NodeId, usize> = leaves
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();

        let mut children = Vec::with_capacity(internal.len());
        for node in &internal {
            let mut slots = [Child::Leaf(0); 2];
            for digit in 0..2u8 {
                let c = node.child(digit);
                slots[digit as usize] = if let Some(&i) = internal_lookup.get(&c) {
                    Child::Internal(i)
                } else if let Some(&i) = leaf_lookup.get(&c) {
                    Child::Leaf(i)
                } else {
                    return invalid(format!("internal node {node} is missing child {c}"));
                };
            }
            children.push(slots);
        }

        let spans = internal
            .iter()
            .map(|node| {
                let left = node.child(0);
                let lo = leaves.iter().position(|l| node.is_prefix_of(l)).unwrap_or(0);
                let hi = lo + leaves[lo..].iter().take_while(|l| node.is_prefix_of(l)).count();
                let mid = lo + leaves[lo..hi].iter().take_while(|l| left.is_prefix_of(l)).count();
                LeafSpan { lo, mid, hi }
            })
            .collect();

        let leaf_paths = leaves
            .iter()
            .map(|leaf| {
                (0..leaf.level())
                    .map(|l| PathStep {
                        node: internal_lookup[&leaf.prefix(l)],
                        right: leaf.bits[l] == 1,
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            kind,
            internal,
            leaves,
            internal_lookup,
            leaf_lookup,
            children,
            spans,
            leaf_paths,
        })
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn num_internal(&self) -> usize {
        self.internal.len()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Internal nodes ordered by level, root first.
    pub fn internal_nodes(&self) -> &[NodeId] {
        &self.internal
    }

    pub fn leaf_index(&self, leaf: &NodeId) -> Option<usize> {
        self.leaf_lookup.get(leaf).copied()
    }

    pub fn internal_index(&self, node: &NodeId) -> Option<usize> {
        self.internal_lookup.get(node).copied()
    }

    pub fn children(&self, internal: usize) -> [Child; 2] {
        self.children[internal]
    }

    pub fn span(&self, internal: usize) -> LeafSpan {
        self.spans[internal]
    }

    /// Root-to-parent path of a leaf, by index.
    pub fn leaf_path(&self, leaf: usize) -> &[PathStep] {
        &self.leaf_paths[leaf]
    }

    /// Ancestors of `leaf` from the root down to its parent.
    pub fn ancestors(&self, leaf: &NodeId) -> Result<Vec<NodeId>> {
        let idx = self
            .leaf_index(leaf)
            .ok_or_else(|| Error::NotFound(format!("leaf {leaf} is not in the tree")))?;
        Ok(self.leaf_paths[idx]
            .iter()
            .map(|s| self.internal[s.node].clone())
            .collect())
    }

    /// Whether `leaf` lies below the left child of `node`. Leaves outside the
    /// subtree of `node` are neither left nor right descendants.
    pub fn is_left_descendant(&self, node: &NodeId, leaf: &NodeId) -> Result<bool> {
        if self.internal_index(node).is_none() {
            return invalid(format!("{node} is not an internal node"));
        }
        if self.leaf_index(leaf).is_none() {
            return Err(Error::NotFound(format!("leaf {leaf} is not in the tree")));
        }
        Ok(node.child(0).is_prefix_of(leaf))
    }

    /// Unordered leaf pairs between which label switches are easiest: siblings
    /// for balanced trees, leaves at most one level apart for lopsided trees.
    /// Custom trees use sibling pairs.
    pub fn adjacent_leaf_pairs(&self) -> Vec<(NodeId, NodeId)> {
        let mut pairs = Vec::new();
        match self.kind {
            TreeKind::Lopsided => {
                for (i, a) in self.leaves.iter().enumerate() {
                    for b in &self.leaves[i + 1..] {
                        if a.level().abs_diff(b.level()) <= 1 {
                            pairs.push((a.clone(), b.clone()));
                        }
                    }
                }
            }
            TreeKind::Balanced | TreeKind::Custom => {
                for slots in &self.children {
                    if let [Child::Leaf(a), Child::Leaf(b)] = *slots {
                        pairs.push((self.leaves[a].clone(), self.leaves[b].clone()));
                    }
                }
            }
        }
        pairs
    }
}

/// Smallest power of two at least twice the expected number of clusters.
pub fn choose_num_leaves(expected_clusters: usize) -> usize {
    (2 * expected_clusters.max(1)).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(s: &[&str]) -> Vec<NodeId> {
        s.iter().map(|x| x.parse().unwrap()).collect()
    }

    #[test]
    fn lopsided_four() {
        let t = TreeTopology::lopsided(4).unwrap();
        assert_eq!(t.leaves(), ids(&["0", "10", "110", "111"]).as_slice());
        assert_eq!(t.internal_nodes(), ids(&["root", "1", "11"]).as_slice());
        assert_eq!(t.num_leaves(), t.num_internal() + 1);
        for i in 0..t.num_internal() {
            assert!(matches!(t.children(i)[0], Child::Leaf(_)));
        }
    }

    #[test]
    fn single_leaf_trees() {
        for t in [
            TreeTopology::lopsided(1).unwrap(),
            TreeTopology::balanced(1).unwrap(),
        ] {
            assert_eq!(t.leaves(), &[NodeId::root()]);
            assert_eq!(t.num_internal(), 0);
            assert!(t.ancestors(&NodeId::root()).unwrap().is_empty());
        }
    }

    #[test]
    fn invalid_leaf_counts() {
        assert!(matches!(TreeTopology::lopsided(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(TreeTopology::balanced(6), Err(Error::InvalidArgument(_))));
        assert!(matches!(TreeTopology::balanced(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn balanced_four_and_sixteen() {
        let t = TreeTopology::balanced(4).unwrap();
        assert_eq!(t.leaves(), ids(&["00", "01", "10", "11"]).as_slice());
        assert_eq!(t.internal_nodes(), ids(&["root", "0", "1"]).as_slice());

        let t16 = TreeTopology::balanced(16).unwrap();
        // the tenth leaf (index 9) is a product of four splits
        assert_eq!(t16.leaf_path(9).len(), 4);
        assert_eq!(t16.leaves()[9].to_string(), "1001");
    }

    #[test]
    fn ancestor_paths() {
        let bt = TreeTopology::balanced(4).unwrap();
        assert_eq!(bt.ancestors(&"01".parse().unwrap()).unwrap(), ids(&["root", "0"]));
        let lt = TreeTopology::lopsided(4).unwrap();
        assert_eq!(
            lt.ancestors(&"111".parse().unwrap()).unwrap(),
            ids(&["root", "1", "11"])
        );
        assert!(matches!(
            lt.ancestors(&"11".parse().unwrap()),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn left_descendants() {
        let bt = TreeTopology::balanced(4).unwrap();
        let root = NodeId::root();
        let n1: NodeId = "1".parse().unwrap();
        let l01: NodeId = "01".parse().unwrap();
        assert!(bt.is_left_descendant(&root, &l01).unwrap());
        assert!(!bt.is_left_descendant(&n1, &l01).unwrap());
        assert!(matches!(
            bt.is_left_descendant(&l01, &l01),
            Err(Error::InvalidArgument(_))
        ));
        // in a lopsided tree the left child of every internal node is a leaf,
        // so 110 sits below the right child of node 1
        let lt = TreeTopology::lopsided(4).unwrap();
        assert!(lt.is_left_descendant(&n1, &"10".parse().unwrap()).unwrap());
        assert!(!lt.is_left_descendant(&n1, &"110".parse().unwrap()).unwrap());
        assert!(lt.is_left_descendant(&"11".parse().unwrap(), &"110".parse().unwrap()).unwrap());
    }

    #[test]
    fn adjacency_counts() {
        assert_eq!(TreeTopology::balanced(8).unwrap().adjacent_leaf_pairs().len(), 4);
        let bt2 = TreeTopology::balanced(2).unwrap().adjacent_leaf_pairs();
        assert_eq!(bt2, vec![(ids(&["0"])[0].clone(), ids(&["1"])[0].clone())]);
        // levels 1,2,3,3: (0,10), (10,110), (10,111), (110,111)
        let lt4 = TreeTopology::lopsided(4).unwrap().adjacent_leaf_pairs();
        assert_eq!(lt4.len(), 4);
        for k in 3..20 {
            assert_eq!(TreeTopology::lopsided(k).unwrap().adjacent_leaf_pairs().len(), k);
        }
        assert_eq!(TreeTopology::lopsided(2).unwrap().adjacent_leaf_pairs().len(), 1);
    }

    #[test]
    fn leaf_count_rule() {
        assert_eq!(choose_num_leaves(5), 16);
        assert_eq!(choose_num_leaves(4), 8);
        assert_eq!(choose_num_leaves(1), 2);
    }

    #[test]
    fn custom_tree_validation() {
        let t = TreeTopology::from_leaves(ids(&["00", "01", "1"])).unwrap();
        assert_eq!(t.kind(), TreeKind::Custom);
        assert_eq!(t.num_internal(), 2);
        assert!(TreeTopology::from_leaves(ids(&["00", "1"])).is_err());
        assert!(TreeTopology::from_leaves(ids(&["0", "01", "1"])).is_err());
        assert!(TreeTopology::from_leaves(vec![]).is_err());
    }

    #[test]
    fn node_id_text_roundtrip() {
        for s in ["root", "0", "1101"] {
            let id: NodeId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(serde_json::from_str::<NodeId>(&json).unwrap(), id);
        }
        assert!("012".parse::<NodeId>().is_err());
    }

    #[test]
    fn spans_match_descendants() {
        let t = TreeTopology::lopsided(5).unwrap();
        for (i, node) in t.internal_nodes().iter().enumerate() {
            let s = t.span(i);
            for (j, leaf) in t.leaves().iter().enumerate() {
                let below = node.is_prefix_of(leaf);
                assert_eq!(below, (s.lo..s.hi).contains(&j));
                assert_eq!(node.child(0).is_prefix_of(leaf), (s.lo..s.mid).contains(&j));
            }
        }
    }
}
