//! Numerical laboratory for contractive Markov systems on directed
//! multigraphs: the system itself, its Markov operator and invariant
//! measure, the coding map onto the edge shift, and the generalized Markov
//! measure together with its thermodynamic identities.

pub mod coding;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod graph;
pub mod rng;
pub mod stats;
pub mod system;
pub mod thermo;

pub use config::{load_config, load_config_file, preset_config, preset_system, ConfigError, RunDefaults, SystemConfig};
pub use error::{Error, Result};
pub use expr::{parse, Expr};
pub use graph::{DirectedMultigraph, Edge, EdgeWord, GraphError};
pub use rng::{SampleRng, StreamKey};
pub use stats::Estimate;
pub use system::{EdgeFunctions, MarkovSystem, RateReport, Region, ValidationReport};
pub use coding::{coding_map, CodeSampler, CodeWindow, CodingOptions, CodingResult, CodingStatus};
pub use dynamics::{estimate_invariant_measure, InvariantEstimate, ParticleEnsemble, PushMode};
pub use thermo::{CylinderMode, CylinderMeasureResult, EnergyEvaluation, WordMeasure};
