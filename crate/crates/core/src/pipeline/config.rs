use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::arap::ArapConfig;
use crate::camera::CameraIntrinsics;
use crate::edgeloss::{EdgeParams, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::meshing::MeshOptions;
use crate::regen::RegenConfig;

/// Version of the configuration and manifest layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One mesh per labeled object.
    #[default]
    Smd,
    /// One mesh for the whole map.
    Gmd,
    /// Pass the prediction through.
    None,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Smd => "smd",
            Mode::Gmd => "gmd",
            Mode::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA }
    }
}

/// Used when samples are drawn from the ground truth instead of read from disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { count: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub prediction: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Write each group's deformed mesh as OBJ.
    pub obj_dumps: bool,
    /// Write each group's energy trace as CSV.
    pub energy_traces: bool,
    /// Largest CDF threshold, meters.
    pub cdf_max: f64,
    pub cdf_points: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            obj_dumps: false,
            energy_traces: false,
            cdf_max: 1.0,
            cdf_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub arap: ArapConfig,
    #[serde(default)]
    pub regen: RegenConfig,
    #[serde(default)]
    pub edges: EdgeParams,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub mesh: MeshOptions,
    /// Meters per stored 16-bit depth unit.
    #[serde(default = "depth_scale")]
    pub depth_scale: f64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub outputs: OutputOptions,
    /// Batch worker threads; falls back to `DEPTHFORGE_WORKERS`, then all cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

pub const WORKERS_ENV: &str = "DEPTHFORGE_WORKERS";

impl PipelineConfig {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            intrinsics,
            mode: Mode::default(),
            arap: ArapConfig::default(),
            regen: RegenConfig::default(),
            edges: EdgeParams::default(),
            loss: LossConfig::default(),
            sampler: SamplerConfig::default(),
            mesh: MeshOptions::default(),
            depth_scale: DEFAULT_DEPTH_SCALE,
            paths: Paths::default(),
            outputs: OutputOptions::default(),
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::Config(format!("depth_scale must be positive, got {}", self.depth_scale)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.loss.alpha > 0.0 && self.loss.alpha.is_finite()) {
            return Err(Error::Config(format!("loss.alpha must be positive, got {}", self.loss.alpha)));
        }
        self.arap.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.edges.canny.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Parses a JSON document after applying `key.path=value` overrides.
    /// Relative paths are resolved against `base_dir` when given.
    pub fn from_json_str(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base_dir {
            cfg.paths.resolve_against(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, overrides, path.parent())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Worker count from the config, then the environment.
    pub fn resolved_workers(&self) -> Result<Option<usize>> {
        if self.workers.is_some() {
            return Ok(self.workers);
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
            },
            Err(_) => Ok(None),
        }
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.prediction,
            &mut self.truth,
            &mut self.labels,
            &mut self.samples,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Sets a dotted key in a JSON document. The value is parsed as JSON and
/// taken as a plain string when that fails. Missing objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap()
            }
            _ => {
                return Err(Error::Config(format!(
                    "override {key:?}: {:?} is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{"intrinsics": {"fx": 500, "fy": 500, "cx": 100, "cy": 80}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::from_json_str(MIN, &[], None).unwrap();
        assert_eq!(c.mode, Mode::Smd);
        assert_eq!(c.depth_scale, 0.001);
        assert_eq!(c.arap.max_iterations, 100);
        assert_eq!(c.loss.alpha, 100.0);
        assert_eq!(c.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn overrides_apply_nested_and_typed() {
        let c = PipelineConfig::from_json_str(
            MIN,
            &[
                "mode=gmd".into(),
                "arap.max_iterations=7".into(),
                "arap.constraint_mode=soft".into(),
                "paths.prediction=pred.png".into(),
                "mesh.stride=2".into(),
            ],
            Some(Path::new("/data")),
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Gmd);
        assert_eq!(c.arap.max_iterations, 7);
        assert_eq!(c.arap.constraint_mode, crate::arap::ConstraintMode::Soft);
        assert_eq!(c.paths.prediction, Some(PathBuf::from("/data/pred.png")));
        assert_eq!(c.mesh.stride, Some(2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PipelineConfig::from_json_str("{}", &[], None).is_err());
        assert!(PipelineConfig::from_json_str(MIN, &["mode=fancy".into()], None).is_err());
        assert!(PipelineConfig::from_json_str(MIN, &["depth_scale=0".into()], None).is_err());
        assert!(PipelineConfig::from_json_str(MIN, &["nonsense".into()], None).is_err());
        assert!(PipelineConfig::from_json_str(MIN, &["typo_field=1".into()], None).is_err());
        assert!(PipelineConfig::from_json_str(MIN, &["mode.x=1".into()], None).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = PipelineConfig::from_json_str(MIN, &[], None).unwrap();
        let back: PipelineConfig = serde_json::from_value(c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
