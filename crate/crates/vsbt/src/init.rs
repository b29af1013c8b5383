//! Initialization of the variational state: greedy evidence-maximizing
//! split search, deterministic routing from the found thresholds,
//! gate-only refinement against that routing, and the leaf-assignment
//! seeding. The greedy path requires K = 2^d_max so every maximum-depth
//! leaf seeds its own model; the fixed-splitting path only needs K to
//! divide the leaf count.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::inference::{
    gate_update_pass, AssignmentPosterior, GatePosterior, InferenceError, Problem,
    RoutingPosterior, TreePosterior, VariationalState,
};
use crate::num::log_evidence;
use crate::tree::{NodeId, TreeIndex};

/// Iteration cap and tolerance for the gate-only refinement.
const GATE_REFINE_TOL: f64 = 1e-6;
const GATE_REFINE_MAX_ITERS: usize = 1000;

#[derive(Debug, Error)]
pub enum InitError {
    #[error("initialization requires K = 2^d_max leaves ({expected}), got K = {k}")]
    ModelCountMismatch { k: usize, expected: usize },
    #[error("series length {n} is below the 2^d_max = {needed} points needed to populate every leaf")]
    SeriesTooShort { n: usize, needed: usize },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Num(#[from] crate::num::NumError),
}

/// Split thresholds found by the greedy search, with the laminar
/// interval family they induce. Intervals are 1-based inclusive
/// [lo, hi]; times t ≤ h_s route left.
#[derive(Debug, Clone)]
pub struct InitPlan {
    pub split_time: Vec<usize>,
    pub intervals: Vec<(usize, usize)>,
}

/// Greedily choose, per inner node from the root down, the split h that
/// maximizes the summed log marginal likelihood of the two sides under
/// the AR prior. Candidates are restricted so every depth-d_max leaf
/// keeps at least one point; among equal candidates the smallest h wins.
pub fn greedy_split_search(problem: &Problem) -> Result<InitPlan, InitError> {
    let tree = problem.tree();
    let n = problem.n();
    require_leaf_seeding(problem)?;

    let mut split_time = vec![0usize; tree.inner_count()];
    let mut intervals = vec![(0usize, 0usize); tree.node_count()];
    intervals[0] = (1, n);
    for s in tree.inner_nodes() {
        let (lo, hi) = intervals[s.0];
        let depth = tree.depth(s);
        // each side must keep 2^(d_max − d − 1) points to populate its leaves
        let need = 1usize << (tree.d_max() - depth - 1);
        let mut best_h = lo + need - 1;
        let mut best = f64::NEG_INFINITY;
        for h in (lo + need - 1)..=(hi - need) {
            let total = interval_evidence(problem, lo, h)? + interval_evidence(problem, h + 1, hi)?;
            if total > best {
                best = total;
                best_h = h;
            }
        }
        split_time[s.0] = best_h;
        let (left, right) = tree.children(s);
        intervals[left.0] = (lo, best_h);
        intervals[right.0] = (best_h + 1, hi);
    }
    Ok(InitPlan {
        split_time,
        intervals,
    })
}

/// Log marginal likelihood of x[lo..=hi] (1-based, inclusive) as a single
/// AR model under the prior.
pub fn interval_evidence(problem: &Problem, lo: usize, hi: usize) -> Result<f64, InitError> {
    debug_assert!(lo >= 1 && hi >= lo && hi <= problem.n());
    let m = hi - lo + 1;
    let y = DVector::from_fn(m, |i, _| problem.data().value(lo + i));
    let rows = problem.data().design().rows(lo - 1, m).into_owned();
    Ok(log_evidence(&y, &rows, &problem.hyper().ar_prior)?)
}

/// One-hot routing from integer thresholds: t routes right at s iff
/// t > h_s.
pub fn deterministic_routing(plan: &InitPlan, tree: &TreeIndex, n: usize) -> RoutingPosterior {
    let varpi_right = DMatrix::from_fn(tree.inner_count(), n, |s, t0| {
        if t0 + 1 > plan.split_time[s] {
            1.0
        } else {
            0.0
        }
    });
    RoutingPosterior::from_varpi_right(tree, varpi_right)
}

/// One-hot routing from the dyadic midpoints h_s = 2^{−(d+1)}(2j−1)·n,
/// the fixed-splitting baseline pattern.
pub fn dyadic_midpoint_routing(tree: &TreeIndex, n: usize) -> RoutingPosterior {
    let varpi_right = DMatrix::from_fn(tree.inner_count(), n, |s_idx, t0| {
        let s = NodeId(s_idx);
        let d = tree.depth(s) as i32;
        let j = tree.offset(s) as f64;
        let h = (2.0 * j - 1.0) * n as f64 / f64::powi(2.0, d + 1);
        if (t0 + 1) as f64 > h {
            1.0
        } else {
            0.0
        }
    });
    RoutingPosterior::from_varpi_right(tree, varpi_right)
}

/// Gate posteriors refined against a frozen routing: start from
/// η′_s = [1, −h_s], L′_s = L_s, then iterate the gate update until the
/// means stop moving. On non-convergence the last iterate is returned
/// (flagged in the result).
pub struct GateRefinement {
    pub gates: GatePosterior,
    pub converged: bool,
    pub iterations: usize,
}

pub fn refine_gates(
    problem: &Problem,
    plan: &InitPlan,
    routing: &RoutingPosterior,
) -> Result<GateRefinement, InitError> {
    let tree = problem.tree();
    let eta = tree
        .inner_nodes()
        .map(|s| Vector2::new(1.0, -(plan.split_time[s.0] as f64)))
        .collect();
    let l: Vec<Matrix2<f64>> = problem.hyper().gate_l.clone();
    let mut gates = GatePosterior::new(eta, l, problem.n());
    gates.reset_xi_to_optimum()?;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..GATE_REFINE_MAX_ITERS {
        let next = gate_update_pass(problem.data(), problem.hyper(), routing, &gates)?;
        iterations += 1;
        let delta = gates
            .eta
            .iter()
            .zip(&next.eta)
            .map(|(a, b)| (b - a).amax())
            .fold(0.0f64, f64::max);
        gates = next;
        if delta < GATE_REFINE_TOL {
            converged = true;
            break;
        }
    }
    Ok(GateRefinement {
        gates,
        converged,
        iterations,
    })
}

/// Seed q(z, T): g′ = 1 and uniform π′ at inner nodes; at the j-th
/// maximum-depth leaf g′ = 0 and π′ the j-th one-hot row.
pub fn seed_assignment(
    tree: &TreeIndex,
    num_models: usize,
) -> Result<(TreePosterior, DMatrix<f64>), InitError> {
    if num_models != tree.leaf_count() {
        return Err(InitError::ModelCountMismatch {
            k: num_models,
            expected: tree.leaf_count(),
        });
    }
    seed_assignment_blocks(tree, num_models)
}

/// Block variant of the assignment seeding for K ≤ 2^d_max: the leaves
/// are split into K contiguous blocks and the j-th leaf seeds model
/// ⌊(j−1)K/2^d_max⌋. Identical to [`seed_assignment`] when K = 2^d_max.
/// Used by fixed-splitting initialization, where deep trees would
/// otherwise force one model per (mostly empty) leaf.
pub fn seed_assignment_blocks(
    tree: &TreeIndex,
    num_models: usize,
) -> Result<(TreePosterior, DMatrix<f64>), InitError> {
    let leaves = tree.leaf_count();
    if num_models == 0 || !leaves.is_multiple_of(num_models) {
        return Err(InitError::ModelCountMismatch {
            k: num_models,
            expected: leaves,
        });
    }
    let g = tree
        .nodes()
        .map(|s| if tree.is_inner(s) { 1.0 } else { 0.0 })
        .collect();
    let uniform = 1.0 / num_models as f64;
    let pi = DMatrix::from_fn(tree.node_count(), num_models, |s_idx, j| {
        let s = NodeId(s_idx);
        if tree.is_inner(s) {
            uniform
        } else if (tree.offset(s) - 1) * num_models / leaves == j {
            1.0
        } else {
            0.0
        }
    });
    Ok((TreePosterior::from_g(tree, g), pi))
}

fn require_leaf_seeding(problem: &Problem) -> Result<(), InitError> {
    let needed = problem.tree().leaf_count();
    if problem.num_models() != needed {
        return Err(InitError::ModelCountMismatch {
            k: problem.num_models(),
            expected: needed,
        });
    }
    if problem.n() < needed {
        return Err(InitError::SeriesTooShort {
            n: problem.n(),
            needed,
        });
    }
    Ok(())
}

/// Full initialization: greedy split search, deterministic routing, gate
/// refinement, and assignment seeding. AR posteriors start at the prior.
pub fn initialize(problem: &Problem) -> Result<VariationalState, InitError> {
    let plan = greedy_split_search(problem)?;
    let routing = deterministic_routing(&plan, problem.tree(), problem.n());
    let refinement = refine_gates(problem, &plan, &routing)?;
    assemble(problem, refinement.gates, routing)
}

/// Initialization for fixed-splitting mode: dyadic midpoint routing and
/// gates held at their prior. Unlike the greedy search this tolerates
/// empty leaves, so deep trees work on short series.
pub fn initialize_fixed_splitting(problem: &Problem) -> Result<VariationalState, InitError> {
    let routing = dyadic_midpoint_routing(problem.tree(), problem.n());
    let mut gates = GatePosterior::new(
        problem.hyper().gate_eta.clone(),
        problem.hyper().gate_l.clone(),
        problem.n(),
    );
    gates.reset_xi_to_optimum().map_err(InitError::Inference)?;
    assemble(problem, gates, routing)
}

fn assemble(
    problem: &Problem,
    gates: GatePosterior,
    routing: RoutingPosterior,
) -> Result<VariationalState, InitError> {
    let (tree_post, pi) = seed_assignment_blocks(problem.tree(), problem.num_models())?;
    Ok(VariationalState {
        gates,
        routing,
        tree: tree_post,
        assign: AssignmentPosterior {
            pi,
            alpha: problem.hyper().alpha.clone(),
        },
        ar: vec![problem.hyper().ar_prior.clone(); problem.num_models()],
    })
}
