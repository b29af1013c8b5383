//! Scalar special functions, log-domain utilities, and small dense SPD
//! linear algebra shared by the inference and initialization code.
//!
//! Everything here is a pure function; all likelihood-scale quantities are
//! kept in log space because products over a full series underflow in
//! linear space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("matrix is not symmetric positive definite (Cholesky failed)")]
    NotPositiveDefinite,
    #[error("gauss-gamma shape/rate must be positive, got a={a}, b={b}")]
    InvalidGaussGamma { a: f64, b: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Logistic sigmoid 1/(1+e^{-x}), overflow-safe on both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln σ(x), stable for large |x|.
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// λ(ξ) = (σ(ξ) − 1/2) / (2ξ), the quadratic-bound coefficient.
///
/// Even and continuous; near the origin the 0/0 form is replaced by the
/// series 1/8 − ξ²/96.
pub fn jj_lambda(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi < 1e-4 {
        0.125 - xi * xi / 96.0
    } else {
        (sigmoid(xi) - 0.5) / (2.0 * xi)
    }
}

/// Digamma function ψ(x) for x > 0, by upward recurrence into the
/// asymptotic regime followed by the Bernoulli series.
///
/// Panics if `x <= 0` or `x` is NaN.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma requires x > 0, got {x}");
    let mut acc = 0.0;
    let mut x = x;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ(x) ~ ln x − 1/(2x) − Σ B_{2n} / (2n x^{2n})
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    acc + x.ln() - 0.5 * inv - series
}

/// ln Γ(x) for x > 0, by upward recurrence and Stirling's series.
///
/// Panics if `x <= 0` or `x` is NaN.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    let mut acc = 0.0;
    let mut x = x;
    while x < 12.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    acc + (x - 0.5) * x.ln() - x + 0.5 * LN_2PI + series
}

/// Max-shifted log Σ exp over a nonempty slice. All −∞ inputs yield −∞.
///
/// Panics on an empty slice or NaN input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "log_sum_exp of empty slice");
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        assert!(!v.is_nan(), "log_sum_exp received NaN");
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Two-argument log-sum-exp, the common case in the tree recursions.
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    debug_assert!(!a.is_nan() && !b.is_nan());
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Gauss-gamma parameters (μ, Λ, a, b) of the conjugate prior/posterior
/// over regression coefficients θ and noise precision τ:
/// θ | τ ~ N(μ, (τΛ)⁻¹), τ ~ Gam(a, b).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussGammaParams {
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

impl GaussGammaParams {
    pub fn new(mu: DVector<f64>, lambda: DMatrix<f64>, a: f64, b: f64) -> Result<Self, NumError> {
        if a <= 0.0 || b <= 0.0 {
            return Err(NumError::InvalidGaussGamma { a, b });
        }
        if lambda.nrows() != lambda.ncols() || lambda.nrows() != mu.len() {
            return Err(NumError::DimensionMismatch(format!(
                "lambda is {}x{}, mu has length {}",
                lambda.nrows(),
                lambda.ncols(),
                mu.len()
            )));
        }
        spd_cholesky(&lambda)?;
        Ok(Self { mu, lambda, a, b })
    }

    /// Standard prior μ = 0, Λ = I, a = b = 1 in the given dimension.
    pub fn standard(dim: usize) -> Self {
        Self {
            mu: DVector::zeros(dim),
            lambda: DMatrix::identity(dim, dim),
            a: 1.0,
            b: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Cholesky factorization of an SPD matrix, with failure mapped to a
/// domain error.
pub fn spd_cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, NumError> {
    Cholesky::new(a.clone()).ok_or(NumError::NotPositiveDefinite)
}

/// Solve A·X = B for SPD A. Returns X.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, NumError> {
    Ok(spd_cholesky(a)?.solve(b))
}

/// ln |A| of an SPD matrix via its Cholesky factor.
pub fn spd_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Log marginal likelihood of `y` under the conjugate Bayesian linear
/// model y = design·θ + ε with the given Gauss-gamma prior:
///
/// ln ∫ p(y | θ, τ) p(θ, τ) dθ dτ
///   = ½ln|Λ| − ½ln|Λₘ| + a ln b − aₘ ln bₘ + lnΓ(aₘ) − lnΓ(a) − (m/2) ln 2π,
///
/// with Λₘ = Λ + XᵀX, μₘ = Λₘ⁻¹(Λμ + Xᵀy), aₘ = a + m/2 and
/// bₘ = b + ½(yᵀy + μᵀΛμ − μₘᵀΛₘμₘ). Empty data yields 0.
pub fn log_evidence(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &GaussGammaParams,
) -> Result<f64, NumError> {
    let m = y.len();
    if design.nrows() != m || design.ncols() != prior.dim() {
        return Err(NumError::DimensionMismatch(format!(
            "design is {}x{}, y has length {m}, prior dimension {}",
            design.nrows(),
            design.ncols(),
            prior.dim()
        )));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let chol_prior = spd_cholesky(&prior.lambda)?;
    let lambda_m = &prior.lambda + design.transpose() * design;
    let chol_m = spd_cholesky(&lambda_m)?;
    let rhs = &prior.lambda * &prior.mu + design.transpose() * y;
    let mu_m = chol_m.solve(&rhs);
    let a_m = prior.a + m as f64 / 2.0;
    let b_m = prior.b
        + 0.5
            * (y.dot(y) + prior.mu.dot(&(&prior.lambda * &prior.mu))
                - mu_m.dot(&(&lambda_m * &mu_m)));
    Ok(0.5 * spd_log_det(&chol_prior) - 0.5 * spd_log_det(&chol_m) + prior.a * prior.b.ln()
        - a_m * b_m.ln()
        + ln_gamma(a_m)
        - ln_gamma(prior.a)
        - m as f64 / 2.0 * LN_2PI)
}

/// Conjugate posterior after observing `y` with rows `design` under the
/// given Gauss-gamma prior (the same quantities that appear inside
/// [`log_evidence`]).
pub fn posterior_update(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &GaussGammaParams,
) -> Result<GaussGammaParams, NumError> {
    let m = y.len() as f64;
    let lambda_m = &prior.lambda + design.transpose() * design;
    let rhs = &prior.lambda * &prior.mu + design.transpose() * y;
    let mu_m = spd_cholesky(&lambda_m)?.solve(&rhs);
    let b_m = prior.b
        + 0.5
            * (y.dot(y) + prior.mu.dot(&(&prior.lambda * &prior.mu))
                - mu_m.dot(&(&lambda_m * &mu_m)));
    GaussGammaParams::new(mu_m, lambda_m, prior.a + m / 2.0, b_m)
}
