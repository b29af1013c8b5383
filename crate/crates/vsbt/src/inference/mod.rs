//! Coordinate-ascent variational inference for the tree-gated AR mixture.
//!
//! The posterior is approximated by q(u) q(z, T) q(θ, τ, π, β), with the
//! logistic gate likelihood replaced by its quadratic lower bound so every
//! block has a closed-form update:
//!
//! * routing q(u): per-time branch probabilities ϖ′ from a bottom-up pass
//!   over the tree and path probabilities q_{s,t} from a top-down pass;
//! * assignment/tree q(z, T): per-node model weights π′ and a CTW-style
//!   recursion for the split posteriors g′;
//! * globals q(θ, τ, π): Dirichlet and Gauss-gamma conjugate updates;
//! * gates q(β) plus the bound tightening parameters ξ.
//!
//! All per-node likelihood aggregates are kept in log space.

mod elbo;
mod fit;
mod updates;

pub use elbo::ElboTerms;
pub use fit::{FitOptions, FitResult, SweepStats};
pub use updates::gate_update_pass;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::model::{Dataset, Hyperparameters, ModelError};
use crate::num::{GaussGammaParams, NumError};
use crate::tree::{NodeId, TreeIndex};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("routing produced a non-finite value at node {node}, t={t}")]
    RoutingNan { node: usize, t: usize },
    #[error("assignment scores vanished at node {node} (all model scores are -inf)")]
    ZeroAssignmentMass { node: usize },
    #[error("AR posterior precision for model {model} is not positive definite")]
    ArPrecisionNotPd { model: usize },
    #[error("gauss-gamma rate for model {model} became nonpositive ({b})")]
    NonPositiveRate { model: usize, b: f64 },
    #[error("gate posterior precision at inner node {node} is not positive definite")]
    GatePrecisionNotPd { node: usize },
    #[error("fit diverged (non-finite objective) at sweep {sweep}")]
    Diverged { sweep: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Gaussian gate posteriors q(β_s) = N(η′_s, L′_s⁻¹) per inner node plus
/// the bound parameters ξ_{s,t} ≥ 0.
#[derive(Debug, Clone)]
pub struct GatePosterior {
    pub eta: Vec<Vector2<f64>>,
    pub l: Vec<Matrix2<f64>>,
    xi: Vec<f64>,
    n: usize,
}

impl GatePosterior {
    pub fn new(eta: Vec<Vector2<f64>>, l: Vec<Matrix2<f64>>, n: usize) -> Self {
        let inner = eta.len();
        assert_eq!(l.len(), inner);
        Self {
            eta,
            l,
            xi: vec![1.0; inner * n],
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// ξ_{s,t} with 1-based t.
    pub fn xi(&self, s: NodeId, t: usize) -> f64 {
        self.xi[s.0 * self.n + (t - 1)]
    }

    pub fn set_xi(&mut self, s: NodeId, t: usize, value: f64) {
        debug_assert!(value >= 0.0);
        self.xi[s.0 * self.n + (t - 1)] = value;
    }

    /// Set every ξ_{s,t} to its optimum √(t̃ᵀ(L′⁻¹ + η′η′ᵀ)t̃) for the
    /// current (η′, L′).
    pub fn reset_xi_to_optimum(&mut self) -> Result<(), InferenceError> {
        for s_idx in 0..self.eta.len() {
            let chol = self.l[s_idx]
                .cholesky()
                .ok_or(InferenceError::GatePrecisionNotPd { node: s_idx })?;
            let quad = chol.inverse() + self.eta[s_idx] * self.eta[s_idx].transpose();
            for t in 1..=self.n {
                let tc = Vector2::new(t as f64, 1.0);
                self.xi[s_idx * self.n + (t - 1)] = (quad * tc).dot(&tc).sqrt();
            }
        }
        Ok(())
    }
}

/// Routing posterior: per-(t, inner node) branch probabilities ϖ′ and the
/// induced path probabilities q_{s,t} = ∏ ϖ′ along the root-to-s edges.
///
/// The q matrix is always derived from ϖ′ in the constructor, so the two
/// cannot drift apart.
#[derive(Debug, Clone)]
pub struct RoutingPosterior {
    /// ϖ′_{t,s,s₁} (right-branch probability), inner nodes × times.
    varpi_right: DMatrix<f64>,
    /// q_{s,t}, all nodes × times.
    q: DMatrix<f64>,
}

impl RoutingPosterior {
    /// Build from right-branch probabilities (rows = inner nodes in level
    /// order, columns = t−1); computes q top-down.
    pub fn from_varpi_right(tree: &TreeIndex, varpi_right: DMatrix<f64>) -> Self {
        assert_eq!(varpi_right.nrows(), tree.inner_count());
        let n = varpi_right.ncols();
        let mut q = DMatrix::zeros(tree.node_count(), n);
        q.row_mut(0).fill(1.0);
        for s in tree.inner_nodes() {
            let (left, right) = tree.children(s);
            for col in 0..n {
                let qs = q[(s.0, col)];
                let w1 = varpi_right[(s.0, col)];
                q[(left.0, col)] = qs * (1.0 - w1);
                q[(right.0, col)] = qs * w1;
            }
        }
        Self { varpi_right, q }
    }

    pub fn n(&self) -> usize {
        self.q.ncols()
    }

    /// ϖ′_{t,s,u} for branch u ∈ {0 = left, 1 = right}, 1-based t.
    pub fn varpi(&self, t: usize, s: NodeId, branch: usize) -> f64 {
        let right = self.varpi_right[(s.0, t - 1)];
        if branch == 1 {
            right
        } else {
            1.0 - right
        }
    }

    /// q_{s,t} = q(s ⪯ s(u_t)) with 1-based t.
    pub fn q(&self, s: NodeId, t: usize) -> f64 {
        self.q[(s.0, t - 1)]
    }

    /// Node × time matrix of q_{s,t}.
    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn varpi_right_matrix(&self) -> &DMatrix<f64> {
        &self.varpi_right
    }
}

/// Tree posterior: split probabilities g′ per node with the derived
/// ancestor-split products and leaf probabilities q(s ∈ L_T).
#[derive(Debug, Clone)]
pub struct TreePosterior {
    /// g′_s per node; 0 at depth d_max.
    pub g: Vec<f64>,
    /// ln φ_s per node (the CTW aggregate from the latest assignment
    /// update; zeros until then).
    pub log_phi: Vec<f64>,
    /// ∏_{s′ ≺ s} g′_{s′} per node.
    anc_split: Vec<f64>,
    /// q(s ∈ L_T) = (1 − g′_s) ∏_{s′ ≺ s} g′_{s′} per node.
    leaf_prob: Vec<f64>,
}

impl TreePosterior {
    pub fn from_g(tree: &TreeIndex, g: Vec<f64>) -> Self {
        let mut post = Self {
            g,
            log_phi: vec![0.0; tree.node_count()],
            anc_split: Vec::new(),
            leaf_prob: Vec::new(),
        };
        post.refresh_derived(tree);
        post
    }

    /// Recompute ancestor products and leaf probabilities from g′.
    pub fn refresh_derived(&mut self, tree: &TreeIndex) {
        assert_eq!(self.g.len(), tree.node_count());
        let mut anc = vec![1.0; tree.node_count()];
        for s in tree.inner_nodes() {
            let (l, r) = tree.children(s);
            let down = anc[s.0] * self.g[s.0];
            anc[l.0] = down;
            anc[r.0] = down;
        }
        self.leaf_prob = tree
            .nodes()
            .map(|s| anc[s.0] * (1.0 - self.g[s.0]))
            .collect();
        self.anc_split = anc;
    }

    pub fn leaf_prob(&self, s: NodeId) -> f64 {
        self.leaf_prob[s.0]
    }

    pub fn leaf_probs(&self) -> &[f64] {
        &self.leaf_prob
    }

    /// ∏_{s′ ≺ s} g′_{s′}: probability that every strict ancestor splits.
    pub fn ancestor_split_prob(&self, s: NodeId) -> f64 {
        self.anc_split[s.0]
    }
}

/// Per-node model assignment posteriors π′ and the Dirichlet parameter α′.
#[derive(Debug, Clone)]
pub struct AssignmentPosterior {
    /// π′_{s,k}, nodes × models; every row sums to 1.
    pub pi: DMatrix<f64>,
    /// α′ of q(π) = Dir(α′).
    pub alpha: DVector<f64>,
}

/// All variational posterior blocks.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub gates: GatePosterior,
    pub routing: RoutingPosterior,
    pub tree: TreePosterior,
    pub assign: AssignmentPosterior,
    /// Gauss-gamma posteriors (μ′_k, Λ′_k, a′_k, b′_k) per model.
    pub ar: Vec<GaussGammaParams>,
}

/// A dataset bound to hyperparameters; all update operations hang off
/// this.
#[derive(Debug, Clone)]
pub struct Problem {
    data: Dataset,
    hyper: Hyperparameters,
    tree: TreeIndex,
}

impl Problem {
    pub fn new(data: Dataset, hyper: Hyperparameters) -> Result<Self, InferenceError> {
        hyper.validate()?;
        if data.ar_order() != hyper.ar_order {
            return Err(InferenceError::Model(ModelError::BadHyper(format!(
                "dataset has AR order {}, hyperparameters say {}",
                data.ar_order(),
                hyper.ar_order
            ))));
        }
        let tree = hyper.tree();
        Ok(Self { data, hyper, tree })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn tree(&self) -> &TreeIndex {
        &self.tree
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn num_models(&self) -> usize {
        self.hyper.num_models
    }
}
