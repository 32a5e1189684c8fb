//! Synthetic dictionary-data feature learning experiments.
//!
//! Inputs are sparse combinations of dictionary patterns, x̃ = M·φ̃ (+ noise),
//! with labels decided by how many of a small relevant pattern subset is
//! present. A two-layer truncated-ReLU network is trained with a staged
//! hyperparameter schedule and compared against fixed-feature baselines
//! (random features, tangent/NTK features, frozen early-step features),
//! with alignment and MDS diagnostics showing what the first layer learned.
//!
//! Module map:
//! - [`synthdata`]: dictionaries, hidden-vector families, labeling, datasets
//! - [`activation`]: truncated ReLU and its Gaussian-smoothed version
//! - [`network`]: two-layer params, initializations, loss and exact gradients
//! - [`trainer`]: staged schedule, gradient-descent loop, SGD+momentum mode
//! - [`baselines`]: fixed feature maps + linear hinge classifiers
//! - [`diagnostics`]: cosine alignment, classical MDS, accuracy/hinge eval
//! - [`oracles`]: hand-built exact classifier network, gradient component
//!   probes, parity orthogonality enumeration
//! - [`harness`]: config-driven experiment runner, tables, CSV/SVG artifacts

pub mod activation;
pub mod baselines;
pub mod diagnostics;
pub mod harness;
pub mod network;
pub mod numeric;
pub mod oracles;
pub mod rng;
pub mod synthdata;
pub mod trainer;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum FeatError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible request: {0}")]
    Feasibility(String),

    #[error("degenerate data spec: {0}")]
    DegenerateSpec(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("empty batch or dataset")]
    Empty,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("acceptance threshold failed: {0}")]
    Threshold(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type FeatResult<T> = Result<T, FeatError>;
