//! Quantitative analyses of trained representations: learned-vs-ideal action
//! matrices, determinant drift under composition, decoded latent traversals,
//! and an inverse-model benchmark built on an in-crate random forest.

mod benchmark;
mod forest;
mod matrices;
mod traversal;

pub use benchmark::{
    fold_assignment, inverse_features, inverse_model_benchmark, write_benchmark_csv,
    BenchmarkConfig, BenchmarkResult, Representation,
};
pub use forest::{
    train_decision_forest, DecisionForest, DecisionTree, Features, ForestConfig, CLASSES,
};
pub use matrices::{
    analyze_action_matrices, analyze_matrices, determinant_drift, write_drift_csv,
    write_matrix_report_csv, ActionReport, DriftCurve, MatrixReport,
};
pub use traversal::{
    centroid_displacement, latent_traversal, traversal_grid, write_pgm_grid, Traversal,
    PHASE_RANGE, SWEEP_RANGE,
};

use crate::models::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model has no action matrices")]
    NoActionMatrices,
    #[error("latent dimension {index} out of range for a {z_dim}-dimensional model")]
    InvalidDim { index: usize, z_dim: usize },
    #[error("latent pair {index} out of range for a {z_dim}-dimensional model")]
    InvalidPair { index: usize, z_dim: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("features are not finite at row {0}")]
    NonFinite(usize),
    #[error("label {label} at row {row} is not an action code")]
    BadLabel { row: usize, label: u8 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
