use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context as _;
use cms_core::Estimate;
use serde::Serialize;
use serde_json::Value;

pub type Params = BTreeMap<String, Value>;

/// One estimated quantity.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub quantity: String,
    pub estimate: f64,
    /// `null` for quantities without a sampling error (exact values, suprema, distances).
    pub stderr: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub params: Params,
}

impl Record {
    pub fn new(quantity: &str, estimate: f64, stderr: Option<f64>, n_samples: usize, seed: u64) -> Self {
        Self {
            quantity: quantity.to_string(),
            estimate,
            stderr,
            n_samples,
            seed,
            params: Params::new(),
        }
    }

    pub fn from_estimate(quantity: &str, e: &Estimate, seed: u64) -> Self {
        Self::new(quantity, e.estimate, Some(e.stderr), e.n_samples, seed)
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(key.to_string(), to_value(value));
        self
    }
}

/// The JSON document every subcommand emits. It holds no wall-clock data,
/// so identical invocations produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub command: &'static str,
    pub system: String,
    pub seed: u64,
    pub params: Params,
    pub records: Vec<Record>,
    pub details: Value,
}

/// A report plus CSV artifacts and whether the run counts as a failed check.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub failure: Option<String>,
    pub out: Option<std::path::PathBuf>,
    /// Human-readable text for stderr.
    pub notes: Vec<String>,
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn render(report: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_artifacts(dir: &Path, command: &str, json: &str, artifacts: &[(String, Vec<u8>)]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{command}.json"));
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
