//! The closed-form coordinate updates for the four posterior blocks.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::model::{Dataset, Hyperparameters};
use crate::num::{
    digamma, jj_lambda, ln_sigmoid, log_sum_exp2, spd_cholesky, GaussGammaParams, LN_2PI,
};
use crate::tree::NodeId;

use super::{
    AssignmentPosterior, GatePosterior, InferenceError, Problem, RoutingPosterior, TreePosterior,
    VariationalState,
};

impl Problem {
    /// n × K table of E_{q(θ_k, τ_k)}[ln N(x_t | x̃_tᵀθ_k, τ_k⁻¹)]
    ///   = ½{ψ(a′_k) − ln b′_k − ln 2π − (a′_k/b′_k)(x_t − x̃ᵀμ′_k)² − x̃ᵀ(Λ′_k)⁻¹x̃}.
    pub fn leaf_loglik_table(
        &self,
        ar: &[GaussGammaParams],
    ) -> Result<DMatrix<f64>, InferenceError> {
        let n = self.n();
        let design = self.data().design();
        let x = self.data().series();
        let mut v = DMatrix::zeros(n, ar.len());
        for (k, post) in ar.iter().enumerate() {
            let chol = spd_cholesky(&post.lambda)
                .map_err(|_| InferenceError::ArPrecisionNotPd { model: k })?;
            let lam_inv = chol.inverse();
            let fitted = design * &post.mu;
            let scaled = design * &lam_inv; // rows x̃ᵀ Λ′⁻¹
            let base = digamma(post.a) - post.b.ln() - LN_2PI;
            let prec = post.a / post.b;
            for t0 in 0..n {
                let resid = x[t0] - fitted[t0];
                let quad = scaled.row(t0).dot(&design.row(t0));
                v[(t0, k)] = 0.5 * (base - prec * resid * resid - quad);
            }
        }
        Ok(v)
    }

    /// E_{q(β_s)}[ln h(u | β_s, ξ_{s,t})] for branch u at inner node s.
    pub fn expected_log_h(
        &self,
        gates: &GatePosterior,
        s: NodeId,
        t: usize,
        branch: usize,
    ) -> f64 {
        let eta = gates.eta[s.0];
        let quad = gate_second_moment(gates, s);
        let xi = gates.xi(s, t);
        expected_log_h_raw(&eta, &quad, xi, self.data().t_cov(t), branch)
    }

    /// The (♦) term: expected leaf log-likelihood contribution of node s
    /// at time t, ½·q(s ∈ L_T)·Σ_k π′_{s,k}{...}.
    pub fn expected_leaf_loglik(
        &self,
        state: &VariationalState,
        s: NodeId,
        t: usize,
    ) -> Result<f64, InferenceError> {
        let v = self.leaf_loglik_table(&state.ar)?;
        let k = self.num_models();
        let mut acc = 0.0;
        for j in 0..k {
            acc += state.assign.pi[(s.0, j)] * v[(t - 1, j)];
        }
        Ok(state.tree.leaf_prob(s) * acc)
    }

    /// Recompute q(u): bottom-up ln ϱ aggregation and branch
    /// normalization, then the top-down path products.
    pub fn update_routing(&self, state: &mut VariationalState) -> Result<(), InferenceError> {
        let tree = self.tree();
        let n = self.n();
        let v = self.leaf_loglik_table(&state.ar)?;
        let diamond = diamond_table(&state.tree, &state.assign, &v);
        let gate_quads: Vec<Matrix2<f64>> = tree
            .inner_nodes()
            .map(|s| gate_second_moment(&state.gates, s))
            .collect();

        let mut varpi_right = DMatrix::zeros(tree.inner_count(), n);
        let mut ln_rho = vec![0.0; tree.node_count()];
        for t in 1..=n {
            let tc = self.data().t_cov(t);
            for s_idx in (0..tree.inner_count()).rev() {
                let s = NodeId(s_idx);
                let eta = state.gates.eta[s_idx];
                let xi = state.gates.xi(s, t);
                for branch in 0..2 {
                    let child = tree.child(s, branch);
                    let mut val = expected_log_h_raw(&eta, &gate_quads[s_idx], xi, tc, branch)
                        + diamond[(child.0, t - 1)];
                    if tree.is_inner(child) {
                        let (gl, gr) = tree.children(child);
                        val += log_sum_exp2(ln_rho[gl.0], ln_rho[gr.0]);
                    }
                    if !val.is_finite() {
                        return Err(InferenceError::RoutingNan { node: child.0, t });
                    }
                    ln_rho[child.0] = val;
                }
            }
            for s in tree.inner_nodes() {
                let (l, r) = tree.children(s);
                let lse = log_sum_exp2(ln_rho[l.0], ln_rho[r.0]);
                varpi_right[(s.0, t - 1)] = (ln_rho[r.0] - lse).exp();
            }
        }
        state.routing = RoutingPosterior::from_varpi_right(tree, varpi_right);
        Ok(())
    }

    /// Recompute q(z, T): per-node model scores ρ and weights π′, then the
    /// CTW-style φ recursion for g′ and the derived leaf probabilities.
    pub fn update_assignment_and_tree(
        &self,
        state: &mut VariationalState,
    ) -> Result<(), InferenceError> {
        let tree = self.tree();
        let k = self.num_models();
        let v = self.leaf_loglik_table(&state.ar)?;
        let alpha_total: f64 = state.assign.alpha.sum();
        let digamma_total = digamma(alpha_total);
        let base: Vec<f64> = (0..k)
            .map(|j| digamma(state.assign.alpha[j]) - digamma_total)
            .collect();

        // ln ρ_{s,k} = E[ln π_k] + Σ_t q_{s,t} v_{t,k}
        let mut ln_rho = state.routing.q_matrix() * &v;
        for mut row in ln_rho.row_iter_mut() {
            for j in 0..k {
                row[j] += base[j];
            }
        }

        // normalize π′ rows; keep the per-node log score ln Σ_k ρ_{s,k}
        let mut log_score = vec![0.0; tree.node_count()];
        for s in tree.nodes() {
            let row = ln_rho.row(s.0);
            let max = row.max();
            if !max.is_finite() {
                return Err(InferenceError::ZeroAssignmentMass { node: s.0 });
            }
            let sum: f64 = row.iter().map(|&l| (l - max).exp()).sum();
            log_score[s.0] = max + sum.ln();
            for j in 0..k {
                state.assign.pi[(s.0, j)] = (ln_rho[(s.0, j)] - log_score[s.0]).exp();
            }
        }

        // φ recursion in log domain and split posteriors g′
        let g_prior = &self.hyper().split_prob;
        let mut log_phi = vec![0.0; tree.node_count()];
        let mut g_post = vec![0.0; tree.node_count()];
        for s_idx in (0..tree.node_count()).rev() {
            let s = NodeId(s_idx);
            if tree.is_max_leaf(s) {
                log_phi[s_idx] = log_score[s_idx];
            } else {
                let (l, r) = tree.children(s);
                let stay = (1.0 - g_prior[s_idx]).ln() + log_score[s_idx];
                let split = g_prior[s_idx].ln() + log_phi[l.0] + log_phi[r.0];
                let total = log_sum_exp2(stay, split);
                if total == f64::NEG_INFINITY {
                    return Err(InferenceError::ZeroAssignmentMass { node: s_idx });
                }
                log_phi[s_idx] = total;
                g_post[s_idx] = (split - total).exp().min(1.0);
            }
        }
        state.tree.g = g_post;
        state.tree.log_phi = log_phi;
        state.tree.refresh_derived(tree);
        Ok(())
    }

    /// Recompute q(π) and every q(θ_k, τ_k) from the current routing,
    /// leaf probabilities and assignment weights.
    pub fn update_global_params(
        &self,
        state: &mut VariationalState,
    ) -> Result<(), InferenceError> {
        let hyper = self.hyper();
        let k = self.num_models();
        let design = self.data().design();
        let x = self.data().series();

        let w = leaf_weight_matrix(&state.tree, &state.assign); // nodes × K
        let tw = self.time_weight_table(state, &w); // n × K

        // α′_k = α_k + Σ_s w_{s,k}
        let mut alpha = hyper.alpha.clone();
        for j in 0..k {
            alpha[j] += w.column(j).sum();
        }
        state.assign.alpha = alpha;

        let prior = &hyper.ar_prior;
        let prior_quad = prior.mu.dot(&(&prior.lambda * &prior.mu));
        let lam_mu = &prior.lambda * &prior.mu;
        for j in 0..k {
            let wk = tw.column(j);
            let mut scaled = design.clone();
            for (t0, mut row) in scaled.row_iter_mut().enumerate() {
                row *= wk[t0];
            }
            let lambda_post = &prior.lambda + design.transpose() * &scaled;
            let chol = spd_cholesky(&lambda_post)
                .map_err(|_| InferenceError::ArPrecisionNotPd { model: j })?;
            let rhs = &lam_mu + scaled.transpose() * x;
            let mu_post = chol.solve(&rhs);
            let weight_total: f64 = wk.sum();
            let a_post = prior.a + 0.5 * weight_total;
            let data_quad: f64 = (0..self.n()).map(|t0| wk[t0] * x[t0] * x[t0]).sum();
            let b_post = prior.b
                + 0.5 * (prior_quad + data_quad - mu_post.dot(&(&lambda_post * &mu_post)));
            if b_post <= 0.0 {
                return Err(InferenceError::NonPositiveRate {
                    model: j,
                    b: b_post,
                });
            }
            state.ar[j] = GaussGammaParams {
                mu: mu_post,
                lambda: lambda_post,
                a: a_post,
                b: b_post,
            };
        }
        Ok(())
    }

    /// Recompute every gate posterior q(β_s) and then the bound
    /// parameters ξ_{s,t}.
    pub fn update_gates(&self, state: &mut VariationalState) -> Result<(), InferenceError> {
        state.gates = gate_update_pass(self.data(), self.hyper(), &state.routing, &state.gates)?;
        Ok(())
    }

    /// n × K table of total time-model weight W_{t,k} = Σ_s w_{s,k} q_{s,t}.
    pub(crate) fn time_weight_table(
        &self,
        state: &VariationalState,
        leaf_weights: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        state.routing.q_matrix().transpose() * leaf_weights
    }
}

/// η′η′ᵀ + L′⁻¹ for one gate (the second moment of q(β_s)).
pub(super) fn gate_second_moment(gates: &GatePosterior, s: NodeId) -> Matrix2<f64> {
    let linv = gates.l[s.0]
        .cholesky()
        .expect("gate precision stays positive definite")
        .inverse();
    linv + gates.eta[s.0] * gates.eta[s.0].transpose()
}

/// E[ln h(u | β, ξ)] under q(β) with mean η′ and second moment `quad`.
pub(super) fn expected_log_h_raw(
    eta: &Vector2<f64>,
    quad: &Matrix2<f64>,
    xi: f64,
    tc: Vector2<f64>,
    branch: usize,
) -> f64 {
    let mean_act = eta.dot(&tc);
    ln_sigmoid(xi) + mean_act * branch as f64
        - 0.5 * (mean_act + xi)
        - jj_lambda(xi) * ((quad * tc).dot(&tc) - xi * xi)
}

/// nodes × n table of the (♦) terms: row s is q(s ∈ L_T)·Σ_k π′_{s,k} v_{·,k}.
pub(super) fn diamond_table(
    tree_post: &TreePosterior,
    assign: &AssignmentPosterior,
    v: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut d = &assign.pi * v.transpose();
    for (s, mut row) in d.row_iter_mut().enumerate() {
        row *= tree_post.leaf_probs()[s];
    }
    d
}

/// nodes × K table of w_{s,k} = q(s ∈ L_T)·π′_{s,k}.
pub(super) fn leaf_weight_matrix(
    tree_post: &TreePosterior,
    assign: &AssignmentPosterior,
) -> DMatrix<f64> {
    let mut w = assign.pi.clone();
    for (s, mut row) in w.row_iter_mut().enumerate() {
        row *= tree_post.leaf_probs()[s];
    }
    w
}

/// One pass of the gate update (Eqs for L′, η′, then ξ) against a fixed
/// routing. Shared by the in-sweep update and the gate-only refinement
/// during initialization.
pub fn gate_update_pass(
    data: &Dataset,
    hyper: &Hyperparameters,
    routing: &RoutingPosterior,
    gates: &GatePosterior,
) -> Result<GatePosterior, InferenceError> {
    let n = data.n();
    let mut out = gates.clone();
    for (s_idx, (eta0, l0)) in hyper.gate_eta.iter().zip(&hyper.gate_l).enumerate() {
        let s = NodeId(s_idx);
        let mut l_post: Matrix2<f64> = *l0;
        let mut rhs: Vector2<f64> = l0 * eta0;
        for t in 1..=n {
            let q = routing.q(s, t);
            if q == 0.0 {
                continue;
            }
            let tc = data.t_cov(t);
            l_post += 2.0 * q * jj_lambda(gates.xi(s, t)) * tc * tc.transpose();
            rhs += q * (routing.varpi(t, s, 1) - 0.5) * tc;
        }
        let chol = l_post
            .cholesky()
            .ok_or(InferenceError::GatePrecisionNotPd { node: s_idx })?;
        let eta_post = chol.solve(&rhs);
        let quad = chol.inverse() + eta_post * eta_post.transpose();
        out.eta[s_idx] = eta_post;
        out.l[s_idx] = l_post;
        for t in 1..=n {
            let tc = data.t_cov(t);
            out.set_xi(s, t, (quad * tc).dot(&tc).sqrt());
        }
    }
    Ok(out)
}

/// Expected log of the Dirichlet weights, ψ(α′_k) − ψ(Σ α′).
pub(super) fn expected_log_pi(alpha: &DVector<f64>) -> Vec<f64> {
    let total = digamma(alpha.sum());
    alpha.iter().map(|&a| digamma(a) - total).collect()
}
