//! TOML system configuration and the built-in presets.
//!
//! ```toml
//! schema = 1
//! dimension = 1
//!
//! [defaults]            # optional run defaults
//! seed = 0
//!
//! [[vertex]]
//! id = "K"
//! region = "x1 >= 0 and x1 <= 1"   # predicate over x1..xd
//! bbox = [[0.0, 1.0]]              # one [lo, hi] per coordinate
//! anchor = [0.0]                   # x_i, must satisfy the predicate
//!
//! [[edge]]
//! id = "0"
//! from = "K"
//! to = "K"
//! map = ["x1/10"]                  # one expression per coordinate
//! prob = "1/10"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::expr::{parse_numeric, parse_predicate, Expr, ParseError};
use crate::graph::{DirectedMultigraph, GraphError};
use crate::system::{EdgeFunctions, MarkovSystem, Region};

pub const SCHEMA_VERSION: u32 = 1;

/// Names accepted by [`preset_config`].
pub const PRESET_NAMES: &[&str] = &[
    "decimal-uniform",
    "decimal-weighted",
    "example3",
    "gmeasure-2symbol",
];

const PRESETS: &[(&str, &str)] = &[
    ("decimal-uniform", include_str!("../presets/decimal-uniform.toml")),
    ("decimal-weighted", include_str!("../presets/decimal-weighted.toml")),
    ("example3", include_str!("../presets/example3.toml")),
    ("gmeasure-2symbol", include_str!("../presets/gmeasure-2symbol.toml")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: at `{path}`: {message}")]
    Schema {
        source_name: String,
        path: String,
        message: String,
    },
    #[error("{source_name}: unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    UnsupportedSchema { source_name: String, found: u32 },
    #[error("{source_name}:{line}:{column}: in `{field}`: {error}")]
    Expression {
        source_name: String,
        field: String,
        line: usize,
        column: usize,
        error: ParseError,
    },
    #[error("{source_name}: edge `{edge}` references undefined vertex `{vertex}`")]
    DanglingVertex {
        source_name: String,
        edge: String,
        vertex: String,
    },
    #[error("{source_name}: {source}")]
    Invalid {
        source_name: String,
        #[source]
        source: crate::Error,
    },
    #[error("unknown preset `{0}` (known: {known})", known = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunDefaults {
    pub seed: u64,
    pub particles: usize,
    pub samples: usize,
    pub past_depth: usize,
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for RunDefaults {
    fn default() -> Self {
        Self {
            seed: 0,
            particles: 100_000,
            samples: 100_000,
            past_depth: 12,
            tol: 1e-8,
            max_depth: 10_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexConfig {
    pub id: String,
    pub region: Spanned<String>,
    pub bbox: Vec<[f64; 2]>,
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub id: String,
    pub from: String,
    pub to: String,
    pub map: Vec<Spanned<String>>,
    pub prob: Spanned<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema: u32,
    pub dimension: usize,
    #[serde(rename = "vertex")]
    pub vertices: Vec<VertexConfig>,
    #[serde(rename = "edge")]
    pub edges: Vec<EdgeConfig>,
    #[serde(default)]
    pub defaults: RunDefaults,
    #[serde(skip)]
    source_name: String,
    #[serde(skip)]
    source_text: String,
}

impl SystemConfig {
    /// Parses configuration text. `source_name` labels error messages.
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let schema_err = |path: String, message: String| ConfigError::Schema {
            source_name: source_name.to_string(),
            path,
            message,
        };
        let de = toml::Deserializer::parse(text)
            .map_err(|e| schema_err(".".into(), e.message().to_string()))?;
        let mut cfg: SystemConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| {
                let path = e.path().to_string();
                // `Spanned` wraps its value in an internal field; hide it
                let path = match path.find(".$__serde_spanned") {
                    Some(i) => path[..i].to_string(),
                    None => path,
                };
                schema_err(path, e.inner().message().to_string())
            })?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::UnsupportedSchema {
                source_name: source_name.to_string(),
                found: cfg.schema,
            });
        }
        cfg.source_name = source_name.to_string();
        cfg.source_text = text.to_string();
        Ok(cfg)
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    fn expression(
        &self,
        field: String,
        src: &Spanned<String>,
        parse: fn(&str) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ConfigError> {
        parse(src.get_ref()).map_err(|error| {
            // the span covers the quoted literal; skip the opening quote
            let at = (src.span().start + 1 + error.offset).min(self.source_text.len());
            let before = &self.source_text[..at];
            let line = before.matches('\n').count() + 1;
            let column = at - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            ConfigError::Expression {
                source_name: self.source_name.clone(),
                field,
                line,
                column,
                error,
            }
        })
    }

    /// Parses every expression and assembles the system.
    pub fn build(&self) -> Result<MarkovSystem, ConfigError> {
        let d = self.dimension;
        let vertex_ids: Vec<&str> = self.vertices.iter().map(|v| v.id.as_str()).collect();
        let edge_triples: Vec<(&str, &str, &str)> = self
            .edges
            .iter()
            .map(|e| (e.id.as_str(), e.from.as_str(), e.to.as_str()))
            .collect();
        let invalid = |source: crate::Error| ConfigError::Invalid {
            source_name: self.source_name.clone(),
            source,
        };
        let graph = DirectedMultigraph::new(&vertex_ids, &edge_triples).map_err(|e| match e {
            GraphError::DanglingVertex { edge, vertex } => ConfigError::DanglingVertex {
                source_name: self.source_name.clone(),
                edge,
                vertex,
            },
            other => invalid(other.into()),
        })?;
        let mut regions = Vec::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            let predicate =
                self.expression(format!("vertex[{i}].region"), &v.region, parse_predicate)?;
            regions.push(Region {
                predicate,
                bbox: v.bbox.iter().map(|b| (b[0], b[1])).collect(),
                anchor: v.anchor.clone(),
            });
        }
        let mut edge_fns = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let map = e
                .map
                .iter()
                .enumerate()
                .map(|(j, m)| self.expression(format!("edge[{i}].map[{j}]"), m, parse_numeric))
                .collect::<Result<Vec<_>, _>>()?;
            let prob = self.expression(format!("edge[{i}].prob"), &e.prob, parse_numeric)?;
            edge_fns.push(EdgeFunctions { map, prob });
        }
        MarkovSystem::new(graph, d, regions, edge_fns).map_err(invalid)
    }
}

/// Reads and parses a configuration file.
pub fn load_config_file(path: &Path) -> Result<SystemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SystemConfig::from_toml_str(&text, &path.display().to_string())
}

/// Reads, parses and builds a system from a configuration file.
pub fn load_config(path: &Path) -> Result<MarkovSystem, ConfigError> {
    load_config_file(path)?.build()
}

pub fn preset_config(name: &str) -> Result<SystemConfig, ConfigError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    SystemConfig::from_toml_str(text, &format!("preset:{name}"))
}

pub fn preset_system(name: &str) -> Result<MarkovSystem, ConfigError> {
    preset_config(name)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load() {
        for name in PRESET_NAMES {
            let sys = preset_system(name).unwrap();
            assert!(sys.graph().is_irreducible(), "{name}");
        }
        let ex3 = preset_system("example3").unwrap();
        assert_eq!(ex3.graph().vertex_count(), 1);
        assert_eq!(ex3.graph().edge_count(), 2);
        assert_eq!(ex3.apply_map(0, &[3.0]).unwrap(), vec![1.5]);
        assert_eq!(ex3.apply_map(1, &[3.0]).unwrap(), vec![6.0]);
        let dec = preset_system("decimal-uniform").unwrap();
        assert_eq!(dec.graph().vertex_count(), 1);
        assert_eq!(dec.graph().edge_count(), 10);
        for e in 0..10 {
            assert_eq!(dec.prob(e, &[0.3]).unwrap(), 0.1);
        }
        assert!(matches!(
            preset_system("nope"),
            Err(ConfigError::UnknownPreset(_))
        ));
    }

    #[test]
    fn presets_pass_validation() {
        for name in PRESET_NAMES {
            let report = preset_system(name).unwrap().validate(2000, 0).unwrap();
            assert!(report.ok, "{name}: {report:?}");
        }
    }

    const SMALL: &str = r#"
schema = 1
dimension = 1

[[vertex]]
id = "A"
region = "x1 >= 0 and x1 <= 1"
bbox = [[0.0, 1.0]]
anchor = [0.5]

[[edge]]
id = "e"
from = "A"
to = "Z"
map = ["x1/2"]
prob = "1"
"#;

    #[test]
    fn dangling_vertex_is_named() {
        let err = SystemConfig::from_toml_str(SMALL, "small.toml")
            .unwrap()
            .build()
            .unwrap_err();
        match err {
            ConfigError::DanglingVertex { vertex, edge, .. } => {
                assert_eq!(vertex, "Z");
                assert_eq!(edge, "e");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn expression_errors_carry_line_and_field() {
        let text = SMALL.replace("to = \"Z\"", "to = \"A\"").replace("x1/2", "x1/(2");
        let err = SystemConfig::from_toml_str(&text, "small.toml")
            .unwrap()
            .build()
            .unwrap_err();
        match &err {
            ConfigError::Expression {
                field,
                line,
                column,
                error,
                ..
            } => {
                assert_eq!(field, "edge[0].map[0]");
                assert_eq!(*line, 15);
                assert_eq!(error.offset, 5);
                // `map = ["` is 8 bytes, the error sits 5 bytes further
                assert_eq!(*column, 14);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(err.to_string().starts_with("small.toml:15:14"));
    }

    #[test]
    fn schema_violations_report_the_field_path() {
        let text = SMALL.replace("prob = \"1\"", "prob = 1");
        let err = SystemConfig::from_toml_str(&text, "small.toml").unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert_eq!(path, "edge[0].prob"),
            other => panic!("unexpected {other}"),
        }
        let text = SMALL.replace("schema = 1", "schema = 2");
        assert!(matches!(
            SystemConfig::from_toml_str(&text, "x").unwrap_err(),
            ConfigError::UnsupportedSchema { found: 2, .. }
        ));
        let text = SMALL.replace("anchor = [0.5]", "anchor = [0.5]\ncolour = 3");
        assert!(matches!(
            SystemConfig::from_toml_str(&text, "x").unwrap_err(),
            ConfigError::Schema { .. }
        ));
    }
}
