//! Bayesian time-series segmentation with variable-splitting binary
//! trees: a perfect binary tree whose inner nodes carry logistic gates
//! over the time index recursively partitions {1..n}, each partition
//! cell is explained by one of K candidate AR models, and a conjugate
//! prior over pruned subtrees makes the posterior over all tree shapes
//! tractable by CTW-style recursions. Inference is coordinate-ascent
//! variational Bayes with a local quadratic bound for the gates.
//!
//! The crate ships a library (this module tree), a `vsbt` CLI for
//! generating benchmark series, fitting, and reporting, and two packaged
//! experiments.

pub mod cli;
pub mod inference;
pub mod init;
pub mod model;
pub mod num;
pub mod persist;
pub mod render;
pub mod report;
pub mod tree;
