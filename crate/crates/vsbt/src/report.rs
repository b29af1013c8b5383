//! Posterior summarization: MAP tree extraction, learned split times,
//! per-time model labels, and change probabilities.

use nalgebra::DVector;
use thiserror::Error;

use crate::inference::{GatePosterior, VariationalState};
use crate::tree::{NodeId, PrunedTree, TreeIndex};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("split time undefined at node {node}: gate mean has zero time coefficient")]
    UndefinedSplit { node: usize },
}

/// Everything a segmentation run reports.
#[derive(Debug, Clone)]
pub struct SegmentationReport {
    pub map_tree: PrunedTree,
    /// Learned split time per internal node of the MAP tree, level order.
    pub split_times: Vec<(NodeId, f64)>,
    /// Most probable model index per time t.
    pub labels: Vec<usize>,
    /// Posterior change probability between t and t+1, indexed by t.
    pub change_prob: Vec<f64>,
    /// Marginal model-membership vector r_t per time.
    pub r_vectors: Vec<DVector<f64>>,
}

/// MAP pruned subtree under the product-form posterior: bottom-up
/// max-product with v(s) = max(1 − g′_s, g′_s ∏_ch v(ch)), computed in
/// log space; ties resolve to the leaf.
pub fn map_tree(tree: &TreeIndex, g: &[f64]) -> PrunedTree {
    let mut log_v = vec![0.0; tree.node_count()];
    let mut split = vec![false; tree.inner_count()];
    for s_idx in (0..tree.node_count()).rev() {
        let s = NodeId(s_idx);
        if tree.is_max_leaf(s) {
            log_v[s_idx] = 0.0; // g′ = 0 there, so 1 − g′ = 1
            continue;
        }
        let (l, r) = tree.children(s);
        let leaf_score = (1.0 - g[s_idx]).ln();
        let split_score = g[s_idx].ln() + log_v[l.0] + log_v[r.0];
        if split_score > leaf_score {
            split[s_idx] = true;
            log_v[s_idx] = split_score;
        } else {
            log_v[s_idx] = leaf_score;
        }
    }
    // unreachable split flags below a leaf decision are never set because
    // the recursion only records the local argmax; prune to regularity
    let mut flags = vec![false; tree.inner_count()];
    let mut stack = vec![NodeId::ROOT];
    while let Some(s) = stack.pop() {
        if tree.is_inner(s) && split[s.0] {
            flags[s.0] = true;
            let (l, r) = tree.children(s);
            stack.push(l);
            stack.push(r);
        }
    }
    PrunedTree::from_split_flags(tree, flags).expect("regular by construction")
}

/// Learned split time h_s = −η′_{s,2}/η′_{s,1} per internal node of the
/// MAP tree (the time where the gate crosses one half).
pub fn split_times(
    gates: &GatePosterior,
    map: &PrunedTree,
    tree: &TreeIndex,
) -> Result<Vec<(NodeId, f64)>, ReportError> {
    map.internal_nodes(tree)
        .into_iter()
        .map(|s| {
            let eta = gates.eta[s.0];
            if eta[0] == 0.0 {
                Err(ReportError::UndefinedSplit { node: s.0 })
            } else {
                Ok((s, -eta[1] / eta[0]))
            }
        })
        .collect()
}

/// Per-time model labels: route each t through the MAP tree's internal
/// nodes by the more probable branch, then take the most probable model
/// at the reached leaf. Ties go to the smaller index (left branch).
pub fn map_labels(state: &VariationalState, map: &PrunedTree, tree: &TreeIndex) -> Vec<usize> {
    let n = state.routing.n();
    let k = state.assign.pi.ncols();
    (1..=n)
        .map(|t| {
            let mut s = NodeId::ROOT;
            while map.is_split(s) {
                let right = state.routing.varpi(t, s, 1);
                s = tree.child(s, usize::from(right > 0.5));
            }
            let mut best = 0;
            for j in 1..k {
                if state.assign.pi[(s.0, j)] > state.assign.pi[(s.0, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Marginal model-membership vectors r_t via the bottom-up recursion
/// r_{t,s} = π′_s at maximum depth and
/// (1 − g′_s) π′_s + g′_s Σ_u ϖ′_{t,s,s_u} r_{t,s_u} at inner nodes.
pub fn membership_vectors(state: &VariationalState, tree: &TreeIndex) -> Vec<DVector<f64>> {
    let n = state.routing.n();
    let k = state.assign.pi.ncols();
    let mut out = Vec::with_capacity(n);
    for t in 1..=n {
        let mut r: Vec<DVector<f64>> = vec![DVector::zeros(k); tree.node_count()];
        for s_idx in (0..tree.node_count()).rev() {
            let s = NodeId(s_idx);
            let pi_row = state.assign.pi.row(s_idx).transpose();
            if tree.is_max_leaf(s) {
                r[s_idx] = pi_row;
            } else {
                let (l, rt) = tree.children(s);
                let g = state.tree.g[s_idx];
                let w1 = state.routing.varpi(t, s, 1);
                let mixed = (1.0 - w1) * &r[l.0] + w1 * &r[rt.0];
                r[s_idx] = (1.0 - g) * pi_row + g * mixed;
            }
        }
        out.push(std::mem::take(&mut r[0]));
    }
    out
}

/// Change probabilities 1 − r_tᵀr_{t+1} for t = 1..n−1, via the posterior
/// model-marginal recursion. The inner product treats consecutive
/// memberships as independent, which the recursion's derivation flags as
/// an approximation.
pub fn change_probabilities(r_vectors: &[DVector<f64>]) -> Vec<f64> {
    r_vectors
        .windows(2)
        .map(|w| (1.0 - w[0].dot(&w[1])).clamp(0.0, 1.0))
        .collect()
}

/// Assemble the full report from a fitted state.
pub fn build_report(
    state: &VariationalState,
    tree: &TreeIndex,
) -> Result<SegmentationReport, ReportError> {
    let map = map_tree(tree, &state.tree.g);
    let split = split_times(&state.gates, &map, tree)?;
    let labels = map_labels(state, &map, tree);
    let r_vectors = membership_vectors(state, tree);
    let change_prob = change_probabilities(&r_vectors);
    Ok(SegmentationReport {
        map_tree: map,
        split_times: split,
        labels,
        change_prob,
        r_vectors,
    })
}
