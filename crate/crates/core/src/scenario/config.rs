//! On-disk scenario grammar.

use serde::Deserialize;

use crate::engine::{EstimationMode, ReallocationMode};
use crate::policies::{PolicyTunables, WeightRule};
use crate::stochastic::Distribution;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub servers: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub warmup: f64,
    #[serde(default)]
    pub estimation: EstimationMode,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default)]
    pub reallocation: ReallocationMode,
    pub policies: Vec<String>,
    #[serde(default)]
    pub weights: WeightRule,
    #[serde(default)]
    pub policy: PolicyTunables,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
    pub sweep: Option<SweepSpec>,
    #[serde(default, rename = "variant")]
    pub variants: Vec<VariantSpec>,
}

fn default_horizon() -> f64 {
    110_000.0
}

fn default_batches() -> usize {
    11
}

fn default_seed() -> u64 {
    1
}

fn default_smoothing() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    pub gamma: f64,
    pub jobs: u32,
    pub delta: f64,
    pub charge: f64,
    pub obligation: f64,
    pub penalty: f64,
    pub service: Distribution,
    /// Defaults to exponential with rate `gamma`.
    pub interarrival: Option<Distribution>,
}

/// Either an explicit value list or an inclusive `from`/`to`/`step` range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `servers` or `<class name>.<field>`.
    pub parameter: String,
    pub values: Option<Vec<f64>>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    /// Service law replacements keyed by class name.
    #[serde(default)]
    pub service: std::collections::BTreeMap<String, Distribution>,
}
