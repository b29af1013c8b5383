//! Perfect-binary-tree addressing and exhaustive pruned-subtree
//! enumeration.
//!
//! Nodes are addressed by a single level-order index: the node at depth
//! `d`, offset `j ∈ {1..2^d}` has index `2^d − 1 + (j − 1)`, so child and
//! parent arithmetic is O(1) and per-node state lives in dense arrays.
//! The tree partitions the time axis; depth-`d_max` leaves are the finest
//! cells.

use thiserror::Error;

/// Depth cap for exhaustive enumeration; tree counts grow as
/// c(d) = 1 + c(d−1)² (2, 5, 26, 677, ...).
pub const ENUMERATION_DEPTH_LIMIT: usize = 4;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("enumeration requires d_max <= {limit}, got {d_max}")]
    EnumerationTooDeep { d_max: usize, limit: usize },
    #[error("split flags violate regularity: node {node} is split but its parent is not")]
    IrregularSplit { node: usize },
    #[error("expected {expected} split flags for d_max={d_max}, got {got}")]
    WrongFlagCount { expected: usize, got: usize, d_max: usize },
}

/// Level-order index of a node in the perfect tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// Addressing for a perfect binary tree of depth `d_max ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeIndex {
    d_max: usize,
}

impl TreeIndex {
    pub fn new(d_max: usize) -> Self {
        assert!(d_max >= 1, "tree depth must be at least 1");
        assert!(d_max < 32, "tree depth {d_max} too large to address");
        Self { d_max }
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Total node count 2^(d_max+1) − 1.
    pub fn node_count(&self) -> usize {
        (1 << (self.d_max + 1)) - 1
    }

    /// Inner nodes are exactly those at depth < d_max; in level order they
    /// occupy indices 0..2^d_max − 1.
    pub fn inner_count(&self) -> usize {
        (1 << self.d_max) - 1
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.d_max
    }

    pub fn depth(&self, node: NodeId) -> usize {
        debug_assert!(node.0 < self.node_count());
        (usize::BITS - 1 - (node.0 + 1).leading_zeros()) as usize
    }

    /// 1-based offset j within the node's depth level.
    pub fn offset(&self, node: NodeId) -> usize {
        node.0 + 2 - (1 << self.depth(node))
    }

    /// Node at (depth, offset) with 1-based offset.
    pub fn node_at(&self, depth: usize, offset: usize) -> NodeId {
        assert!(depth <= self.d_max && offset >= 1 && offset <= (1 << depth));
        NodeId((1 << depth) - 1 + (offset - 1))
    }

    pub fn is_inner(&self, node: NodeId) -> bool {
        node.0 < self.inner_count()
    }

    pub fn is_max_leaf(&self, node: NodeId) -> bool {
        !self.is_inner(node) && node.0 < self.node_count()
    }

    /// Left and right children of an inner node. The node at (d, j) has
    /// children (d+1, 2j−1) and (d+1, 2j). Calling this on a maximum-depth
    /// leaf is a usage error.
    pub fn children(&self, node: NodeId) -> (NodeId, NodeId) {
        assert!(
            self.is_inner(node),
            "children requested on max-depth node {}",
            node.0
        );
        (NodeId(2 * node.0 + 1), NodeId(2 * node.0 + 2))
    }

    /// Child along a branch: 0 = left, 1 = right.
    pub fn child(&self, node: NodeId, branch: usize) -> NodeId {
        debug_assert!(branch < 2);
        let (l, r) = self.children(node);
        if branch == 0 {
            l
        } else {
            r
        }
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        if node.0 == 0 {
            None
        } else {
            Some(NodeId((node.0 - 1) / 2))
        }
    }

    /// Ordered (ancestor, child) edges from the root down to `node`;
    /// the list has exactly `depth(node)` entries.
    pub fn path_to(&self, node: NodeId) -> Vec<(NodeId, NodeId)> {
        let mut rev = Vec::with_capacity(self.depth(node));
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            rev.push((p, cur));
            cur = p;
        }
        rev.reverse();
        rev
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn inner_nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.inner_count()).map(NodeId)
    }

    pub fn max_leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (self.inner_count()..self.node_count()).map(NodeId)
    }

    pub fn nodes_at_depth(&self, depth: usize) -> impl Iterator<Item = NodeId> {
        debug_assert!(depth <= self.d_max);
        let start = (1usize << depth) - 1;
        (start..start + (1 << depth)).map(NodeId)
    }
}

/// A regular pruned subtree of the perfect tree: one split flag per inner
/// node, with a node flagged only if its parent is flagged (or it is the
/// root). Flagged nodes have both children present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedTree {
    d_max: usize,
    split: Vec<bool>,
}

impl PrunedTree {
    pub fn root_only(tree: &TreeIndex) -> Self {
        Self {
            d_max: tree.d_max(),
            split: vec![false; tree.inner_count()],
        }
    }

    /// Build from per-inner-node split flags in level order, validating
    /// regularity.
    pub fn from_split_flags(tree: &TreeIndex, split: Vec<bool>) -> Result<Self, TreeError> {
        if split.len() != tree.inner_count() {
            return Err(TreeError::WrongFlagCount {
                expected: tree.inner_count(),
                got: split.len(),
                d_max: tree.d_max(),
            });
        }
        for node in tree.inner_nodes() {
            if split[node.0] {
                if let Some(p) = tree.parent(node) {
                    if !split[p.0] {
                        return Err(TreeError::IrregularSplit { node: node.0 });
                    }
                }
            }
        }
        Ok(Self {
            d_max: tree.d_max(),
            split,
        })
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Whether `node` is an internal node of this subtree. Maximum-depth
    /// leaves carry no split flag and always report false.
    pub fn is_split(&self, node: NodeId) -> bool {
        node.0 < self.split.len() && self.split[node.0]
    }

    pub fn split_flags(&self) -> &[bool] {
        &self.split
    }

    pub fn num_internal(&self) -> usize {
        self.split.iter().filter(|&&s| s).count()
    }

    /// Internal nodes in level order.
    pub fn internal_nodes(&self, tree: &TreeIndex) -> Vec<NodeId> {
        tree.inner_nodes().filter(|s| self.is_split(*s)).collect()
    }

    /// Leaves of the pruned subtree in level order.
    pub fn leaves(&self, tree: &TreeIndex) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![NodeId::ROOT];
        while let Some(s) = stack.pop() {
            if self.is_split(s) {
                let (l, r) = tree.children(s);
                stack.push(r);
                stack.push(l);
            } else {
                out.push(s);
            }
        }
        out.sort();
        out
    }

    /// Leaf containing the given maximum-depth leaf's path; i.e. the
    /// unique leaf of this subtree on the root-to-`node` path.
    pub fn leaf_on_path(&self, _tree: &TreeIndex, path: &[(NodeId, NodeId)]) -> NodeId {
        let mut cur = NodeId::ROOT;
        for (s, c) in path {
            debug_assert_eq!(*s, cur);
            if !self.is_split(cur) {
                return cur;
            }
            cur = *c;
        }
        cur
    }

    /// ln p(T) under the product prior with per-node split probabilities
    /// `g` (indexed by level-order node id, g = 0 at maximum depth).
    pub fn log_prior(&self, tree: &TreeIndex, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), tree.node_count());
        let mut lp = 0.0;
        for s in self.internal_nodes(tree) {
            lp += g[s.0].ln();
        }
        for s in self.leaves(tree) {
            lp += (1.0 - g[s.0]).ln();
        }
        lp
    }
}

/// Every regular pruned subtree of the perfect tree, exactly once.
/// Guarded by [`ENUMERATION_DEPTH_LIMIT`] because the count grows as
/// c(d) = 1 + c(d−1)².
pub fn enumerate_pruned_trees(tree: &TreeIndex) -> Result<Vec<PrunedTree>, TreeError> {
    if tree.d_max() > ENUMERATION_DEPTH_LIMIT {
        return Err(TreeError::EnumerationTooDeep {
            d_max: tree.d_max(),
            limit: ENUMERATION_DEPTH_LIMIT,
        });
    }
    let splits = enumerate_from(tree, NodeId::ROOT);
    Ok(splits
        .into_iter()
        .map(|set| {
            let mut flags = vec![false; tree.inner_count()];
            for s in set {
                flags[s.0] = true;
            }
            PrunedTree {
                d_max: tree.d_max(),
                split: flags,
            }
        })
        .collect())
}

/// Split-node sets of all pruned subtrees rooted at `node`: either a leaf
/// here, or split here combined with every choice for each child.
fn enumerate_from(tree: &TreeIndex, node: NodeId) -> Vec<Vec<NodeId>> {
    if !tree.is_inner(node) {
        return vec![Vec::new()];
    }
    let (l, r) = tree.children(node);
    let left = enumerate_from(tree, l);
    let right = enumerate_from(tree, r);
    let mut out = vec![Vec::new()];
    for ls in &left {
        for rs in &right {
            let mut v = Vec::with_capacity(1 + ls.len() + rs.len());
            v.push(node);
            v.extend_from_slice(ls);
            v.extend_from_slice(rs);
            out.push(v);
        }
    }
    out
}
