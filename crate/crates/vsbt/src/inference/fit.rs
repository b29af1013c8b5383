//! The coordinate-ascent driver.
//!
//! Sweep order: global parameters, gates (with ξ), routing, then
//! assignment/tree. In fixed-splitting mode the routing stays pinned to
//! its deterministic dyadic pattern and the gate/ξ updates are skipped,
//! which emulates the fixed-split baseline inside the same engine.

use super::{InferenceError, Problem, VariationalState};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_sweeps: usize,
    /// Convergence threshold on the largest absolute parameter change in
    /// one sweep (Frobenius norm for the precision matrices).
    pub tol: f64,
    /// Pin routing to the dyadic midpoint pattern and freeze the gates.
    pub fixed_splitting: bool,
    /// Gate/ξ passes per sweep. Each pass is an ascent step; one pass is
    /// the default.
    pub gate_passes: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-6,
            fixed_splitting: false,
            gate_passes: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStats {
    pub sweep: usize,
    pub elbo: f64,
    pub max_param_delta: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: VariationalState,
    pub trace: Vec<SweepStats>,
    pub converged: bool,
}

impl Problem {
    /// Run coordinate-ascent sweeps from `state` until the largest
    /// parameter change drops below `tol` or `max_sweeps` is reached.
    pub fn fit(
        &self,
        mut state: VariationalState,
        opts: &FitOptions,
    ) -> Result<FitResult, InferenceError> {
        let mut trace = Vec::new();
        let mut converged = false;
        for sweep in 1..=opts.max_sweeps {
            let prev = state.clone();
            self.update_global_params(&mut state)?;
            if !opts.fixed_splitting {
                for _ in 0..opts.gate_passes.max(1) {
                    self.update_gates(&mut state)?;
                }
                self.update_routing(&mut state)?;
            }
            self.update_assignment_and_tree(&mut state)?;
            let max_param_delta = param_delta(&prev, &state);
            let elbo = self.surrogate_elbo(&state)?.total();
            if !elbo.is_finite() || max_param_delta.is_nan() {
                return Err(InferenceError::Diverged { sweep });
            }
            trace.push(SweepStats {
                sweep,
                elbo,
                max_param_delta,
            });
            if max_param_delta < opts.tol {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            state,
            trace,
            converged,
        })
    }
}

/// Largest absolute change across {η′, g′, π′, α′, μ′, a′, b′}, with the
/// precision matrices Λ′ and L′ entering through Frobenius norms.
fn param_delta(old: &VariationalState, new: &VariationalState) -> f64 {
    let mut delta: f64 = 0.0;
    for (e0, e1) in old.gates.eta.iter().zip(&new.gates.eta) {
        delta = delta.max((e1 - e0).amax());
    }
    for (l0, l1) in old.gates.l.iter().zip(&new.gates.l) {
        delta = delta.max((l1 - l0).norm());
    }
    for (g0, g1) in old.tree.g.iter().zip(&new.tree.g) {
        delta = delta.max((g1 - g0).abs());
    }
    delta = delta.max((&new.assign.pi - &old.assign.pi).amax());
    delta = delta.max((&new.assign.alpha - &old.assign.alpha).amax());
    for (a0, a1) in old.ar.iter().zip(&new.ar) {
        delta = delta.max((&a1.mu - &a0.mu).amax());
        delta = delta.max((&a1.lambda - &a0.lambda).norm());
        delta = delta.max((a1.a - a0.a).abs());
        delta = delta.max((a1.b - a0.b).abs());
    }
    delta
}
