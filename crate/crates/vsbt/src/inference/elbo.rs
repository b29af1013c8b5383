//! Term-by-term assembly of the surrogate evidence lower bound: the
//! variational objective with the gate likelihoods replaced by their
//! quadratic bound. Every coordinate update must leave the total
//! nondecreasing; the per-term breakdown exists so tests can check the
//! block-wise pieces.

use crate::num::{digamma, ln_gamma, LN_2PI};

use super::updates::{
    expected_log_h_raw, expected_log_pi, gate_second_moment, leaf_weight_matrix,
};
use super::{InferenceError, Problem, VariationalState};

/// The surrogate bound split by model block. `*_entropy` fields hold
/// −E[ln q(block)]; the rest hold expected log densities. The bound is
/// the sum of all fields.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    /// Σ E[ln N(x_t | ·)] weighted by routing, tree and assignment.
    pub data: f64,
    /// E[ln p(z | π, T)].
    pub assignment_loglik: f64,
    /// −E[ln ∏ q(z_s)].
    pub assignment_entropy: f64,
    /// E[ln p(T)].
    pub tree_prior: f64,
    /// −E[ln q(T)].
    pub tree_entropy: f64,
    /// E[ln p(π)].
    pub dirichlet_prior: f64,
    /// −E[ln q(π)].
    pub dirichlet_entropy: f64,
    /// Σ_k E[ln p(θ_k, τ_k)].
    pub ar_prior: f64,
    /// −Σ_k E[ln q(θ_k, τ_k)].
    pub ar_entropy: f64,
    /// E[ln h(u | β, ξ)], the bounded gate likelihood.
    pub gate_loglik: f64,
    /// E[ln p(β)].
    pub gate_prior: f64,
    /// −E[ln q(β)].
    pub gate_entropy: f64,
    /// −E[ln q(u)].
    pub routing_entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.data
            + self.assignment_loglik
            + self.assignment_entropy
            + self.tree_prior
            + self.tree_entropy
            + self.dirichlet_prior
            + self.dirichlet_entropy
            + self.ar_prior
            + self.ar_entropy
            + self.gate_loglik
            + self.gate_prior
            + self.gate_entropy
            + self.routing_entropy
    }
}

/// p·ln p with the 0·ln 0 = 0 convention.
fn xlnx(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

/// w·l with the 0·(−∞) = 0 convention.
fn wmul(w: f64, l: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * l
    }
}

impl Problem {
    pub fn surrogate_elbo(&self, state: &VariationalState) -> Result<ElboTerms, InferenceError> {
        let tree = self.tree();
        let hyper = self.hyper();
        let n = self.n();
        let dim = hyper.ar_order as f64 + 1.0;

        let v = self.leaf_loglik_table(&state.ar)?;
        let w = leaf_weight_matrix(&state.tree, &state.assign);
        let tw = self.time_weight_table(state, &w);
        let data = tw.component_mul(&v).sum();

        // assignment block
        let e_ln_pi = expected_log_pi(&state.assign.alpha);
        let mut assignment_loglik = 0.0;
        let mut assignment_entropy = 0.0;
        for s in tree.nodes() {
            let lp = state.tree.leaf_prob(s);
            if lp == 0.0 {
                continue;
            }
            for (j, e) in e_ln_pi.iter().enumerate() {
                assignment_loglik += wmul(lp * state.assign.pi[(s.0, j)], *e);
                assignment_entropy -= lp * xlnx(state.assign.pi[(s.0, j)]);
            }
        }

        // tree block: per-node Bernoulli decomposition over g′ vs g
        let mut tree_prior = 0.0;
        let mut tree_entropy = 0.0;
        for s in tree.inner_nodes() {
            let p_internal = state.tree.ancestor_split_prob(s) * state.tree.g[s.0];
            let p_leaf = state.tree.leaf_prob(s);
            let g0 = hyper.split_prob[s.0];
            tree_prior += wmul(p_internal, g0.ln()) + wmul(p_leaf, (1.0 - g0).ln());
            tree_entropy -=
                wmul(p_internal, state.tree.g[s.0].ln()) + wmul(p_leaf, (1.0 - state.tree.g[s.0]).ln());
        }

        // Dirichlet block
        let ln_beta = |a: &[f64]| -> f64 {
            let total: f64 = a.iter().sum();
            ln_gamma(total) - a.iter().map(|&x| ln_gamma(x)).sum::<f64>()
        };
        let alpha0: Vec<f64> = hyper.alpha.iter().copied().collect();
        let alpha1: Vec<f64> = state.assign.alpha.iter().copied().collect();
        let mut dirichlet_prior = ln_beta(&alpha0);
        let mut dirichlet_entropy = -ln_beta(&alpha1);
        for (j, e) in e_ln_pi.iter().enumerate() {
            dirichlet_prior += (alpha0[j] - 1.0) * e;
            dirichlet_entropy -= (alpha1[j] - 1.0) * e;
        }

        // AR block
        let prior = &hyper.ar_prior;
        let prior_chol = crate::num::spd_cholesky(&prior.lambda)?;
        let prior_log_det = crate::num::spd_log_det(&prior_chol);
        let mut ar_prior = 0.0;
        let mut ar_entropy = 0.0;
        for post in &state.ar {
            let chol = crate::num::spd_cholesky(&post.lambda)?;
            let post_log_det = crate::num::spd_log_det(&chol);
            let lam_inv = chol.inverse();
            let e_ln_tau = digamma(post.a) - post.b.ln();
            let e_tau = post.a / post.b;
            let dmu = &post.mu - &prior.mu;
            let cross = e_tau * dmu.dot(&(&prior.lambda * &dmu))
                + (&prior.lambda * &lam_inv).trace();
            ar_prior += 0.5 * (dim * e_ln_tau + prior_log_det - dim * LN_2PI - cross)
                + prior.a * prior.b.ln()
                - ln_gamma(prior.a)
                + (prior.a - 1.0) * e_ln_tau
                - prior.b * e_tau;
            ar_entropy -= 0.5 * (dim * e_ln_tau + post_log_det - dim * LN_2PI - dim)
                + post.a * post.b.ln()
                - ln_gamma(post.a)
                + (post.a - 1.0) * e_ln_tau
                - post.a;
        }

        // gate block
        let mut gate_loglik = 0.0;
        let mut gate_prior = 0.0;
        let mut gate_entropy = 0.0;
        for s in tree.inner_nodes() {
            let quad = gate_second_moment(&state.gates, s);
            let eta = state.gates.eta[s.0];
            for t in 1..=n {
                let q = state.routing.q(s, t);
                if q == 0.0 {
                    continue;
                }
                let tc = self.data().t_cov(t);
                let xi = state.gates.xi(s, t);
                let w1 = state.routing.varpi(t, s, 1);
                gate_loglik += q
                    * ((1.0 - w1) * expected_log_h_raw(&eta, &quad, xi, tc, 0)
                        + w1 * expected_log_h_raw(&eta, &quad, xi, tc, 1));
            }
            let l0 = hyper.gate_l[s.0];
            let l1 = state.gates.l[s.0];
            let l1_inv = l1
                .cholesky()
                .ok_or(InferenceError::GatePrecisionNotPd { node: s.0 })?
                .inverse();
            let deta = eta - hyper.gate_eta[s.0];
            gate_prior += 0.5
                * (l0.determinant().ln()
                    - 2.0 * LN_2PI
                    - (deta.dot(&(l0 * deta)) + (l0 * l1_inv).trace()));
            gate_entropy -= 0.5 * (l1.determinant().ln() - 2.0 * LN_2PI - 2.0);
        }

        // routing entropy
        let mut routing_entropy = 0.0;
        for s in tree.inner_nodes() {
            for t in 1..=n {
                let q = state.routing.q(s, t);
                if q == 0.0 {
                    continue;
                }
                let w1 = state.routing.varpi(t, s, 1);
                routing_entropy -= q * (xlnx(w1) + xlnx(1.0 - w1));
            }
        }

        Ok(ElboTerms {
            data,
            assignment_loglik,
            assignment_entropy,
            tree_prior,
            tree_entropy,
            dirichlet_prior,
            dirichlet_entropy,
            ar_prior,
            ar_entropy,
            gate_loglik,
            gate_prior,
            gate_entropy,
            routing_entropy,
        })
    }
}
