//! JSON persistence of fits: hyperparameters, posterior parameters,
//! report and trace, all in plain arrays (per-node quantities in level
//! order) so results stay human-inspectable and round-trip bit-exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::inference::{
    AssignmentPosterior, FitResult, GatePosterior, RoutingPosterior, SweepStats, TreePosterior,
};
use crate::model::Hyperparameters;
use crate::num::GaussGammaParams;
use crate::report::SegmentationReport;
use crate::tree::{NodeId, PrunedTree, TreeIndex};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("schema version mismatch: file has {found}, this build reads {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("malformed results file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What produced a results file: command line, input path, seed, options.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct Manifest {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub max_sweeps: usize,
    pub tol: f64,
    pub fixed_splitting: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HyperSpec {
    pub ar_order: usize,
    pub d_max: usize,
    pub num_models: usize,
    /// [η_1, η_2] per inner node, level order.
    pub gate_eta: Vec<[f64; 2]>,
    /// Row-major 2×2 precision per inner node.
    pub gate_l: Vec<[[f64; 2]; 2]>,
    /// Split probability per node, level order over the whole tree.
    pub split_prob: Vec<f64>,
    pub alpha: Vec<f64>,
    pub ar_prior: GaussGammaSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaussGammaSpec {
    pub mu: Vec<f64>,
    /// Row-major square matrix.
    pub lambda: Vec<Vec<f64>>,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GateSpec {
    pub eta_prime: Vec<[f64; 2]>,
    pub l_prime: Vec<[[f64; 2]; 2]>,
}

/// Compact routing summary: the most probable maximum-depth leaf per
/// time (1-based offset) and the probability of that path.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RoutingSummary {
    pub map_leaf_offset: Vec<usize>,
    pub map_path_prob: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TreeSpec {
    pub g_prime: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AssignmentSpec {
    pub alpha_prime: Vec<f64>,
    /// π′ rows per node, level order.
    pub pi_prime: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PosteriorSpec {
    pub gates: GateSpec,
    pub routing_summary: RoutingSummary,
    pub tree: TreeSpec,
    pub assignment: AssignmentSpec,
    pub ar: Vec<GaussGammaSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitTimeSpec {
    pub depth: usize,
    pub offset: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportSpec {
    /// Split flags per inner node, level order.
    pub map_tree: Vec<bool>,
    pub split_times: Vec<SplitTimeSpec>,
    pub labels: Vec<usize>,
    pub change_prob: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceRow {
    pub sweep: usize,
    pub elbo: f64,
    pub max_param_delta: f64,
}

/// The on-disk results document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub manifest: Manifest,
    pub converged: bool,
    /// The analyzed series, for self-contained re-reporting.
    pub series: Vec<f64>,
    pub hyper: HyperSpec,
    pub posterior: PosteriorSpec,
    pub report: ReportSpec,
    pub trace: Vec<TraceRow>,
}

impl From<&GaussGammaParams> for GaussGammaSpec {
    fn from(p: &GaussGammaParams) -> Self {
        Self {
            mu: p.mu.iter().copied().collect(),
            lambda: p
                .lambda
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            a: p.a,
            b: p.b,
        }
    }
}

impl GaussGammaSpec {
    pub fn to_params(&self) -> Result<GaussGammaParams, PersistError> {
        let dim = self.mu.len();
        if self.lambda.len() != dim || self.lambda.iter().any(|r| r.len() != dim) {
            return Err(PersistError::Malformed(
                "gauss-gamma lambda is not square of mu's dimension".into(),
            ));
        }
        let flat: Vec<f64> = self.lambda.iter().flatten().copied().collect();
        GaussGammaParams::new(
            DVector::from_vec(self.mu.clone()),
            DMatrix::from_row_slice(dim, dim, &flat),
            self.a,
            self.b,
        )
        .map_err(|e| PersistError::Malformed(e.to_string()))
    }
}

impl From<&Hyperparameters> for HyperSpec {
    fn from(h: &Hyperparameters) -> Self {
        Self {
            ar_order: h.ar_order,
            d_max: h.d_max,
            num_models: h.num_models,
            gate_eta: h.gate_eta.iter().map(|e| [e[0], e[1]]).collect(),
            gate_l: h.gate_l.iter().map(mat2_to_rows).collect(),
            split_prob: h.split_prob.clone(),
            alpha: h.alpha.iter().copied().collect(),
            ar_prior: (&h.ar_prior).into(),
        }
    }
}

impl HyperSpec {
    pub fn to_hyper(&self) -> Result<Hyperparameters, PersistError> {
        Ok(Hyperparameters {
            ar_order: self.ar_order,
            d_max: self.d_max,
            num_models: self.num_models,
            gate_eta: self
                .gate_eta
                .iter()
                .map(|e| Vector2::new(e[0], e[1]))
                .collect(),
            gate_l: self.gate_l.iter().map(rows_to_mat2).collect(),
            split_prob: self.split_prob.clone(),
            alpha: DVector::from_vec(self.alpha.clone()),
            ar_prior: self.ar_prior.to_params()?,
        })
    }
}

fn mat2_to_rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn rows_to_mat2(r: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn routing_summary(routing: &RoutingPosterior, tree: &TreeIndex) -> RoutingSummary {
    let n = routing.n();
    let mut map_leaf_offset = Vec::with_capacity(n);
    let mut map_path_prob = Vec::with_capacity(n);
    for t in 1..=n {
        let mut s = NodeId::ROOT;
        let mut prob = 1.0;
        while tree.is_inner(s) {
            let w1 = routing.varpi(t, s, 1);
            let branch = usize::from(w1 > 0.5);
            prob *= if branch == 1 { w1 } else { 1.0 - w1 };
            s = tree.child(s, branch);
        }
        map_leaf_offset.push(tree.offset(s));
        map_path_prob.push(prob);
    }
    RoutingSummary {
        map_leaf_offset,
        map_path_prob,
    }
}

/// Assemble the on-disk document from a fit.
pub fn results_file(
    manifest: Manifest,
    series: &[f64],
    hyper: &Hyperparameters,
    fit: &FitResult,
    report: &SegmentationReport,
) -> ResultsFile {
    let tree = hyper.tree();
    let state = &fit.state;
    ResultsFile {
        schema_version: SCHEMA_VERSION,
        manifest,
        converged: fit.converged,
        series: series.to_vec(),
        hyper: hyper.into(),
        posterior: PosteriorSpec {
            gates: GateSpec {
                eta_prime: state.gates.eta.iter().map(|e| [e[0], e[1]]).collect(),
                l_prime: state.gates.l.iter().map(mat2_to_rows).collect(),
            },
            routing_summary: routing_summary(&state.routing, &tree),
            tree: TreeSpec {
                g_prime: state.tree.g.clone(),
            },
            assignment: AssignmentSpec {
                alpha_prime: state.assign.alpha.iter().copied().collect(),
                pi_prime: state
                    .assign
                    .pi
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            },
            ar: state.ar.iter().map(GaussGammaSpec::from).collect(),
        },
        report: ReportSpec {
            map_tree: report.map_tree.split_flags().to_vec(),
            split_times: report
                .split_times
                .iter()
                .map(|(s, time)| SplitTimeSpec {
                    depth: tree.depth(*s),
                    offset: tree.offset(*s),
                    time: *time,
                })
                .collect(),
            labels: report.labels.clone(),
            change_prob: report.change_prob.clone(),
        },
        trace: fit
            .trace
            .iter()
            .map(|s| TraceRow {
                sweep: s.sweep,
                elbo: s.elbo,
                max_param_delta: s.max_param_delta,
            })
            .collect(),
    }
}

impl ResultsFile {
    pub fn to_json(&self) -> Result<String, PersistError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), PersistError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        // check the version before strict decoding, so mismatches are
        // reported as such rather than as shape errors
        #[derive(Deserialize)]
        struct VersionOnly {
            schema_version: u32,
        }
        let v: VersionOnly = serde_json::from_str(text)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(PersistError::SchemaVersion {
                found: v.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, PersistError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuild the MAP tree recorded in the report section.
    pub fn map_tree(&self) -> Result<PrunedTree, PersistError> {
        let tree = TreeIndex::new(self.hyper.d_max);
        PrunedTree::from_split_flags(&tree, self.report.map_tree.clone())
            .map_err(|e| PersistError::Malformed(e.to_string()))
    }

    /// Reconstruct the posterior blocks that the file stores in full
    /// (gates, tree, assignment, AR). Routing is summarized, not stored.
    pub fn posterior_state(
        &self,
    ) -> Result<(GatePosterior, TreePosterior, AssignmentPosterior, Vec<GaussGammaParams>), PersistError>
    {
        let tree = TreeIndex::new(self.hyper.d_max);
        let n = self.series.len();
        let gates = GatePosterior::new(
            self.posterior
                .gates
                .eta_prime
                .iter()
                .map(|e| Vector2::new(e[0], e[1]))
                .collect(),
            self.posterior.gates.l_prime.iter().map(rows_to_mat2).collect(),
            n,
        );
        let tree_post = TreePosterior::from_g(&tree, self.posterior.tree.g_prime.clone());
        let k = self.hyper.num_models;
        if self.posterior.assignment.pi_prime.len() != tree.node_count() {
            return Err(PersistError::Malformed(format!(
                "expected {} assignment rows, got {}",
                tree.node_count(),
                self.posterior.assignment.pi_prime.len()
            )));
        }
        let mut pi = DMatrix::zeros(tree.node_count(), k);
        for (s, row) in self.posterior.assignment.pi_prime.iter().enumerate() {
            if row.len() != k {
                return Err(PersistError::Malformed(format!(
                    "assignment row {s} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                pi[(s, j)] = *v;
            }
        }
        let assign = AssignmentPosterior {
            pi,
            alpha: DVector::from_vec(self.posterior.assignment.alpha_prime.clone()),
        };
        let ar = self
            .posterior
            .ar
            .iter()
            .map(|g| g.to_params())
            .collect::<Result<Vec<_>, _>>()?;
        Ok((gates, tree_post, assign, ar))
    }
}

/// Convert library sweep stats into trace rows (used by summaries).
pub fn trace_rows(trace: &[SweepStats]) -> Vec<TraceRow> {
    trace
        .iter()
        .map(|s| TraceRow {
            sweep: s.sweep,
            elbo: s.elbo,
            max_param_delta: s.max_param_delta,
        })
        .collect()
}
