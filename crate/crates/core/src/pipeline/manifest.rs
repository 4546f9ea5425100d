use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::metrics::MetricsReport;

/// Per-group statistics recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: u32,
    pub vertices: usize,
    pub triangles: usize,
    pub anchors: usize,
    pub stride: usize,
    pub iterations: usize,
    pub converged: bool,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub iterative_solver: bool,
    pub demoted_pixels: usize,
    pub dropped_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce and audit one run. Two runs with the
/// same inputs and configuration differ only in `timings_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub mode: String,
    pub width: usize,
    pub height: usize,
    pub inputs: BTreeMap<String, InputRecord>,
    /// `file` or `generated`.
    pub samples_source: String,
    pub sample_count: usize,
    pub config: Value,
    pub groups: Vec<GroupReport>,
    pub residual_pixels: usize,
    pub input_metrics: Option<MetricsReport>,
    pub metrics: Option<MetricsReport>,
    pub timings_ms: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    /// The manifest as JSON with timings removed, for comparisons.
    pub fn without_timings(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v.as_object_mut().unwrap().remove("timings_ms");
        v
    }
}
