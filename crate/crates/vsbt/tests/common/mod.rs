//! Shared fixtures for the oracle and acceptance suites: deterministic
//! random problems/states and reference implementations of the bound.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vsbt::inference::{
    AssignmentPosterior, GatePosterior, Problem, RoutingPosterior, TreePosterior,
    VariationalState,
};
use vsbt::model::{build_dataset, Hyperparameters};
use vsbt::num::{ln_sigmoid, GaussGammaParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spd2(rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    let m = Matrix2::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    m * m.transpose() + Matrix2::identity() * rng.gen_range(0.3..1.0)
}

pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(dim, dim) * rng.gen_range(0.3..1.0)
}

pub fn random_gauss_gamma(rng: &mut ChaCha8Rng, dim: usize) -> GaussGammaParams {
    GaussGammaParams::new(
        DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0)),
        random_spd(rng, dim),
        rng.gen_range(0.6..5.0),
        rng.gen_range(0.3..4.0),
    )
    .unwrap()
}

/// A problem over a random series with benchmark-style priors.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    d_max: usize,
    ar_order: usize,
    num_models: usize,
) -> Problem {
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let data = build_dataset(&x, ar_order).unwrap();
    let mut hyper = Hyperparameters::defaults(n, d_max, ar_order);
    hyper.num_models = num_models;
    hyper.alpha = DVector::from_fn(num_models, |_, _| rng.gen_range(0.3..1.5));
    Problem::new(data, hyper).unwrap()
}

/// A fully populated state with consistent derived quantities and no
/// special structure.
pub fn random_state(rng: &mut ChaCha8Rng, problem: &Problem) -> VariationalState {
    let tree = problem.tree();
    let n = problem.n();
    let k = problem.num_models();

    let eta = tree
        .inner_nodes()
        .map(|_| Vector2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0)))
        .collect();
    let l = tree.inner_nodes().map(|_| random_spd2(rng)).collect();
    let mut gates = GatePosterior::new(eta, l, n);
    for s in tree.inner_nodes() {
        for t in 1..=n {
            gates.set_xi(s, t, rng.gen_range(0.1..4.0));
        }
    }

    let varpi_right =
        DMatrix::from_fn(tree.inner_count(), n, |_, _| rng.gen_range(0.05..0.95));
    let routing = RoutingPosterior::from_varpi_right(tree, varpi_right);

    let g = tree
        .nodes()
        .map(|s| {
            if tree.is_inner(s) {
                rng.gen_range(0.05..0.95)
            } else {
                0.0
            }
        })
        .collect();
    let tree_post = TreePosterior::from_g(tree, g);

    let mut pi = DMatrix::from_fn(tree.node_count(), k, |_, _| rng.gen_range(0.05..1.0));
    for mut row in pi.row_iter_mut() {
        let total: f64 = row.iter().sum();
        row /= total;
    }
    let alpha = DVector::from_fn(k, |j, _| problem.hyper().alpha[j] + rng.gen_range(0.0..3.0));

    let ar = (0..k)
        .map(|_| random_gauss_gamma(rng, problem.hyper().ar_order + 1))
        .collect();

    VariationalState {
        gates,
        routing,
        tree: tree_post,
        assign: AssignmentPosterior { pi, alpha },
        ar,
    }
}

/// ln h(u | β, ξ) with z = βᵀt̃: the quadratic lower bound of the
/// Bernoulli log-likelihood.
pub fn jj_log_h(u: f64, z: f64, xi: f64) -> f64 {
    ln_sigmoid(xi) + z * u - 0.5 * (z + xi) - vsbt::num::jj_lambda(xi) * (z * z - xi * xi)
}

/// The exact Bernoulli log-likelihood u·ln σ(z) + (1−u)·ln(1−σ(z)).
pub fn bernoulli_loglik(u: f64, z: f64) -> f64 {
    u * ln_sigmoid(z) + (1.0 - u) * ln_sigmoid(-z)
}
