use thiserror::Error;

use crate::expr::EvalError;
use crate::graph::GraphError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error("evaluating {what}: {source}")]
    Eval {
        what: String,
        #[source]
        source: EvalError,
    },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("region of vertex `{vertex}` has no sampled interior after {attempts} consecutive rejections")]
    DegenerateRegion { vertex: String, attempts: usize },

    #[error("point {point:?} lies in no region")]
    OutsideRegions { point: Vec<f64> },

    #[error("edge `{edge}` mapped {point:?} outside region `{vertex}`")]
    RegionViolation {
        edge: String,
        vertex: String,
        point: Vec<f64>,
    },

    #[error("invalid probability {value} for edge `{edge}` at {point:?}")]
    InvalidProbability {
        edge: String,
        value: f64,
        point: Vec<f64>,
    },

    #[error("system is not empirically contractive (rate {0}); supply an explicit burn-in")]
    NotContractive(f64),

    #[error("ensemble would grow to {size} particles, above the cap of {cap}")]
    EnsembleCap { size: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
