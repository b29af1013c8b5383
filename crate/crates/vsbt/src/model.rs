//! Model configuration, dataset construction, and synthetic series
//! generation.
//!
//! The time covariate fed to the gates is the raw index t ∈ {1..n} (the
//! gate prior means are expressed in raw-time units). Pre-sample history
//! x_0, x_{−1}, ... is zero, so lagged design entries referencing times
//! ≤ 0 are 0.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::num::GaussGammaParams;
use crate::tree::TreeIndex;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("AR order {ar_order} must be smaller than the series length {n}")]
    OrderTooLarge { ar_order: usize, n: usize },
    #[error("series is empty")]
    EmptySeries,
    #[error("segment lengths must be positive")]
    EmptySegment,
    #[error("segment variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("segments disagree on AR order: {0} vs {1}")]
    MixedOrders(usize, usize),
    #[error("hyperparameters invalid: {0}")]
    BadHyper(String),
}

/// A series together with its lag-design matrix. Row t of the design is
/// x̃_t = [x_{t−1}, ..., x_{t−D}, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DVector<f64>,
    design: DMatrix<f64>,
    ar_order: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn ar_order(&self) -> usize {
        self.ar_order
    }

    pub fn series(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// x_t with 1-based t.
    pub fn value(&self, t: usize) -> f64 {
        self.x[t - 1]
    }

    /// Design row x̃_t with 1-based t.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.design.row(t - 1).transpose()
    }

    /// Time covariate t̃ = [t, 1] with 1-based t.
    pub fn t_cov(&self, t: usize) -> Vector2<f64> {
        Vector2::new(t as f64, 1.0)
    }
}

/// Build the lag design for a series; history before t = 1 is zero.
pub fn build_dataset(x: &[f64], ar_order: usize) -> Result<Dataset, ModelError> {
    let n = x.len();
    if n == 0 {
        return Err(ModelError::EmptySeries);
    }
    if ar_order >= n {
        return Err(ModelError::OrderTooLarge { ar_order, n });
    }
    let design = DMatrix::from_fn(n, ar_order + 1, |t0, j| {
        if j == ar_order {
            1.0
        } else {
            // lag j+1 of time t = t0+1
            let lagged = t0 as isize - j as isize; // 1-based time t−(j+1) = t0−j
            if lagged >= 1 {
                x[(lagged - 1) as usize]
            } else {
                0.0
            }
        }
    });
    Ok(Dataset {
        x: DVector::from_column_slice(x),
        design,
        ar_order,
    })
}

/// One homogeneous stretch of a piecewise AR specification.
#[derive(Debug, Clone)]
pub struct Segment {
    pub len: usize,
    /// Coefficients [φ_1, ..., φ_D, intercept] matching x̃_t.
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

/// Ground-truth generator for synthetic piecewise-AR series.
#[derive(Debug, Clone)]
pub struct PiecewiseArSpec {
    pub segments: Vec<Segment>,
    pub seed: u64,
}

impl PiecewiseArSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut order = None;
        for seg in &self.segments {
            if seg.len == 0 {
                return Err(ModelError::EmptySegment);
            }
            if seg.variance <= 0.0 {
                return Err(ModelError::NonPositiveVariance(seg.variance));
            }
            let d = seg.coefficients.len() - 1;
            match order {
                None => order = Some(d),
                Some(o) if o != d => return Err(ModelError::MixedOrders(o, d)),
                _ => {}
            }
        }
        if self.segments.is_empty() {
            return Err(ModelError::EmptySegment);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn ar_order(&self) -> usize {
        self.segments[0].coefficients.len() - 1
    }

    /// The three-segment AR(1) benchmark: 25 points each from
    /// θ = [0.8, 2.0], [0.8, −2.0], [0.8, 2.0], unit variance.
    pub fn experiment1(seed: u64) -> Self {
        let seg = |c2: f64| Segment {
            len: 25,
            coefficients: vec![0.8, c2],
            variance: 1.0,
        };
        Self {
            segments: vec![seg(2.0), seg(-2.0), seg(2.0)],
            seed,
        }
    }
}

/// Generate x_t = x̃_tᵀθ_seg(t) + ε_t with zero initial history,
/// deterministic for a fixed seed.
pub fn generate_piecewise_ar(spec: &PiecewiseArSpec) -> Result<Vec<f64>, ModelError> {
    spec.validate()?;
    let n = spec.n();
    let d = spec.ar_order();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Vec::with_capacity(n);
    let mut seg_iter = spec.segments.iter();
    let mut seg = seg_iter.next().expect("validated nonempty");
    let mut remaining = seg.len;
    for t in 1..=n {
        if remaining == 0 {
            seg = seg_iter.next().expect("lengths sum to n");
            remaining = seg.len;
        }
        let mut mean = seg.coefficients[d];
        for lag in 1..=d {
            if t > lag {
                mean += seg.coefficients[lag - 1] * x[t - lag - 1];
            }
        }
        let eps: f64 = std_normal.sample(&mut rng);
        x.push(mean + eps * seg.variance.sqrt());
        remaining -= 1;
    }
    Ok(x)
}

/// x_t = amplitude·sin(2πt/period) + ε_t with ε_t ~ N(0, noise_std²).
pub fn generate_sine_plus_noise(
    n: usize,
    amplitude: f64,
    period: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    if period <= 0.0 {
        return Err(ModelError::BadHyper(format!(
            "sine period must be positive, got {period}"
        )));
    }
    if noise_std < 0.0 {
        return Err(ModelError::BadHyper(format!(
            "noise std must be nonnegative, got {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok((1..=n)
        .map(|t| {
            let eps: f64 = std_normal.sample(&mut rng);
            amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin() + noise_std * eps
        })
        .collect())
}

/// Gate prior means placing every split at the midpoint of its dyadic
/// interval: η_s = [1.0, −2^{−(d+1)}(2j−1)·n] for the j-th node at depth
/// d, in level order over inner nodes.
pub fn default_midpoint_gate_priors(n: usize, d_max: usize) -> Vec<Vector2<f64>> {
    let tree = TreeIndex::new(d_max);
    tree.inner_nodes()
        .map(|s| {
            let d = tree.depth(s) as i32;
            let j = tree.offset(s) as f64;
            Vector2::new(1.0, -(2.0 * j - 1.0) * n as f64 / f64::powi(2.0, d + 1))
        })
        .collect()
}

/// All fixed prior quantities of the model.
#[derive(Debug, Clone)]
pub struct Hyperparameters {
    /// AR order D of the candidate models.
    pub ar_order: usize,
    /// Depth of the perfect tree.
    pub d_max: usize,
    /// Number of candidate AR models K.
    pub num_models: usize,
    /// Gate prior means per inner node, level order.
    pub gate_eta: Vec<Vector2<f64>>,
    /// Gate prior precisions per inner node, level order.
    pub gate_l: Vec<Matrix2<f64>>,
    /// Split probabilities per node (all of the perfect tree, level
    /// order); forced to 0 at depth d_max.
    pub split_prob: Vec<f64>,
    /// Dirichlet concentration over model assignment.
    pub alpha: DVector<f64>,
    /// Shared Gauss-gamma prior over (θ_k, τ_k).
    pub ar_prior: GaussGammaParams,
}

impl Hyperparameters {
    /// The benchmark defaults for a series of length `n`: K = 2^d_max,
    /// L_s = I, g_s = 0.5, α_k = 1/2, μ = 0, Λ = I, a = b = 1, and
    /// midpoint gate means.
    pub fn defaults(n: usize, d_max: usize, ar_order: usize) -> Self {
        let tree = TreeIndex::new(d_max);
        let k = 1 << d_max;
        let split_prob = tree
            .nodes()
            .map(|s| if tree.is_inner(s) { 0.5 } else { 0.0 })
            .collect();
        Self {
            ar_order,
            d_max,
            num_models: k,
            gate_eta: default_midpoint_gate_priors(n, d_max),
            gate_l: vec![Matrix2::identity(); tree.inner_count()],
            split_prob,
            alpha: DVector::from_element(k, 0.5),
            ar_prior: GaussGammaParams::standard(ar_order + 1),
        }
    }

    pub fn tree(&self) -> TreeIndex {
        TreeIndex::new(self.d_max)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let tree = self.tree();
        if self.gate_eta.len() != tree.inner_count() || self.gate_l.len() != tree.inner_count() {
            return Err(ModelError::BadHyper(format!(
                "expected {} gate priors, got {} means and {} precisions",
                tree.inner_count(),
                self.gate_eta.len(),
                self.gate_l.len()
            )));
        }
        if self.split_prob.len() != tree.node_count() {
            return Err(ModelError::BadHyper(format!(
                "expected {} split probabilities, got {}",
                tree.node_count(),
                self.split_prob.len()
            )));
        }
        for s in tree.nodes() {
            let g = self.split_prob[s.0];
            if !(0.0..=1.0).contains(&g) {
                return Err(ModelError::BadHyper(format!(
                    "split probability at node {} is {g}",
                    s.0
                )));
            }
            if tree.is_max_leaf(s) && g != 0.0 {
                return Err(ModelError::BadHyper(format!(
                    "split probability must be 0 at depth d_max, node {} has {g}",
                    s.0
                )));
            }
        }
        if self.num_models == 0 || self.alpha.len() != self.num_models {
            return Err(ModelError::BadHyper(format!(
                "alpha has length {}, expected K = {}",
                self.alpha.len(),
                self.num_models
            )));
        }
        if self.alpha.iter().any(|&a| a <= 0.0) {
            return Err(ModelError::BadHyper("alpha entries must be positive".into()));
        }
        for (i, l) in self.gate_l.iter().enumerate() {
            if l.cholesky().is_none() {
                return Err(ModelError::BadHyper(format!(
                    "gate precision at inner node {i} is not positive definite"
                )));
            }
        }
        if self.ar_prior.dim() != self.ar_order + 1 {
            return Err(ModelError::BadHyper(format!(
                "AR prior dimension {} does not match order {} + 1",
                self.ar_prior.dim(),
                self.ar_order
            )));
        }
        Ok(())
    }
}
