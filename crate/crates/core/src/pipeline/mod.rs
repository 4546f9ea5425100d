//! End-to-end calibration: load inputs, deform, regenerate, evaluate, write.
//!
//! [`calibrate`] is the in-memory core. [`execute`] adds file loading and
//! evaluation, and [`write_outputs`] is the only stage that touches the
//! output directory.

mod config;
mod io;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    apply_override, LossConfig, Mode, OutputOptions, Paths, PipelineConfig, SamplerConfig, DEFAULT_DEPTH_SCALE,
    SCHEMA_VERSION, WORKERS_ENV,
};
pub use io::*;
pub use manifest::{GroupReport, InputRecord, RunManifest};

use crate::arap::{deform, energy_trace_csv, DeformationResult};
use crate::error::{Error, Result};
use crate::meshing::{build_global_mesh, build_group_mesh, segment_groups, write_obj_string, MeshBuild, SemanticObjectGroup};
use crate::metrics::{cdf_csv, evaluate, linear_thresholds, mean_report, CdfPoint, ErrorCdf, MetricsReport};
use crate::regen::{regenerate, DeformedGroup};
use crate::sampler::sample_uniform;
use crate::types::{check_dims, DepthMap, LabelMap, SparseSamples};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct CalibratedGroup {
    pub group: SemanticObjectGroup,
    pub result: DeformationResult,
    pub report: GroupReport,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub depth: DepthMap,
    /// Ascending label order.
    pub groups: Vec<CalibratedGroup>,
    /// Valid prediction pixels left as predicted.
    pub residual_pixels: usize,
    pub warnings: Vec<String>,
    pub timings_ms: BTreeMap<String, f64>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn deform_build(build: MeshBuild, config: &PipelineConfig) -> Result<Option<CalibratedGroup>> {
    let Some(group) = build.group else {
        return Ok(None);
    };
    let result = deform(&group.mesh, &group.anchors, &config.arap)?;
    let report = GroupReport {
        label: group.label,
        vertices: group.mesh.vertex_count(),
        triangles: group.mesh.triangles().len(),
        anchors: group.anchors.len(),
        stride: group.stride,
        iterations: result.iterations,
        converged: result.converged,
        initial_energy: result.energy_trace[0],
        final_energy: result.final_energy(),
        iterative_solver: result.used_iterative_solver,
        demoted_pixels: build.demoted.len(),
        dropped_samples: build.dropped_samples,
    };
    Ok(Some(CalibratedGroup { group, result, report }))
}

/// Calibrates `prediction` against `samples` in the configured mode.
pub fn calibrate(
    prediction: &DepthMap,
    labels: Option<&LabelMap>,
    samples: &SparseSamples,
    config: &PipelineConfig,
) -> Result<Calibration> {
    config.validate()?;
    let (w, h) = prediction.dims();
    config.intrinsics.validate(w, h)?;
    if let Some(l) = labels {
        check_dims((w, h), l.dims())?;
    }
    if let Some(s) = samples.iter().find(|s| s.u as usize >= w || s.v as usize >= h) {
        return Err(Error::InvalidData(format!("sample ({}, {}) outside {w}x{h} image", s.u, s.v)));
    }

    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();
    let t = Instant::now();
    let (builds, mut residual) = match config.mode {
        Mode::None => {
            return Ok(Calibration {
                depth: prediction.clone(),
                groups: Vec::new(),
                residual_pixels: prediction.valid_count(),
                warnings,
                timings_ms: timings,
            })
        }
        Mode::Gmd => {
            let build = build_global_mesh(prediction, samples, &config.intrinsics, &config.mesh)?;
            (vec![build], 0)
        }
        Mode::Smd => {
            let labels = labels.ok_or_else(|| Error::Config("mode smd needs a label map".into()))?;
            let seg = segment_groups(prediction, labels, samples)?;
            let builds = seg
                .groups
                .par_iter()
                .map(|seed| build_group_mesh(seed, prediction, &config.intrinsics, &config.mesh))
                .collect::<Result<Vec<_>>>()?;
            (builds, seg.residual.len())
        }
    };
    timings.insert("mesh".to_string(), ms(t));

    for b in &builds {
        residual += b.demoted.len();
    }
    let t = Instant::now();
    let groups: Vec<CalibratedGroup> = builds
        .into_par_iter()
        .map(|b| deform_build(b, config))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    timings.insert("deform".to_string(), ms(t));

    for g in &groups {
        let r = &g.report;
        if r.dropped_samples > 0 {
            warnings.push(format!("group {}: {} samples on invalid prediction pixels were dropped", r.label, r.dropped_samples));
        }
        if r.demoted_pixels > 0 {
            warnings.push(format!("group {}: {} pixels in anchor-free components left as predicted", r.label, r.demoted_pixels));
        }
        if !r.converged {
            warnings.push(format!("group {}: not converged after {} iterations", r.label, r.iterations));
        }
        if r.iterative_solver {
            warnings.push(format!("group {}: factorization failed, used iterative solver", r.label));
        }
    }
    if groups.is_empty() {
        warnings.push("no deformable group; output equals the prediction".into());
    }

    let t = Instant::now();
    let deformed: Vec<DeformedGroup<'_>> = groups
        .iter()
        .map(|g| DeformedGroup {
            group: &g.group,
            positions: &g.result.positions,
        })
        .collect();
    let depth = regenerate(prediction, &deformed, &config.intrinsics, &config.regen)?;
    timings.insert("regen".to_string(), ms(t));

    Ok(Calibration {
        depth,
        groups,
        residual_pixels: residual,
        warnings,
        timings_ms: timings,
    })
}

/// Everything a run produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub calibration: Calibration,
    pub samples: SparseSamples,
    pub metrics: Option<MetricsReport>,
    pub input_metrics: Option<MetricsReport>,
    pub cdf: Option<Vec<CdfPoint>>,
    pub manifest: RunManifest,
    pub depth_scale: f64,
    pub outputs: OutputOptions,
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("paths.{what} is required")))
}

/// Inputs named in a configuration, decoded and digested.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub prediction: DepthMap,
    pub truth: Option<DepthMap>,
    pub labels: Option<LabelMap>,
    pub samples: SparseSamples,
    /// `file` or `generated`.
    pub samples_source: &'static str,
    pub records: BTreeMap<String, InputRecord>,
}

/// Reads the files in `config.paths`. Samples come from `paths.samples`
/// when given, otherwise they are drawn from the ground truth with the
/// sampler settings.
pub fn load_inputs(config: &PipelineConfig) -> Result<LoadedInputs> {
    let mut records = BTreeMap::new();
    let mut record = |name: &str, path: &Path, bytes: &[u8]| {
        records.insert(
            name.to_string(),
            InputRecord {
                path: path.display().to_string(),
                sha256: sha256_hex(bytes),
            },
        );
    };

    let pred_path = require(&config.paths.prediction, "prediction")?;
    let bytes = read_bytes(pred_path)?;
    record("prediction", pred_path, &bytes);
    let prediction = decode_depth_png(&bytes, config.depth_scale, pred_path)?;
    let dims = prediction.dims();

    let truth = match &config.paths.truth {
        Some(p) => {
            let bytes = read_bytes(p)?;
            record("truth", p, &bytes);
            let t = decode_depth_png(&bytes, config.depth_scale, p)?;
            check_dims(dims, t.dims())?;
            Some(t)
        }
        None => None,
    };
    let labels = match (&config.paths.labels, config.mode) {
        (Some(p), _) => {
            let bytes = read_bytes(p)?;
            record("labels", p, &bytes);
            let l = decode_label_png(&bytes, p)?;
            check_dims(dims, l.dims())?;
            Some(l)
        }
        (None, Mode::Smd) => return Err(Error::Config("mode smd needs paths.labels".into())),
        (None, _) => None,
    };
    let (samples, samples_source) = match (&config.paths.samples, &truth) {
        (Some(p), _) => {
            let bytes = read_bytes(p)?;
            record("samples", p, &bytes);
            let text = String::from_utf8(bytes).map_err(|_| Error::format(p, "not UTF-8"))?;
            (parse_samples_csv(&text, dims.0, dims.1, p)?, "file")
        }
        (None, Some(t)) => (sample_uniform(t, config.sampler.count, config.sampler.seed)?, "generated"),
        (None, None) => return Err(Error::Config("need paths.samples or paths.truth to draw samples from".into())),
    };
    Ok(LoadedInputs {
        prediction,
        truth,
        labels,
        samples,
        samples_source,
        records,
    })
}

/// Loads inputs named in `config.paths`, calibrates and evaluates.
pub fn execute(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let t_all = Instant::now();
    let t = Instant::now();
    let LoadedInputs {
        prediction,
        truth,
        labels,
        samples,
        samples_source: source,
        records: inputs,
    } = load_inputs(config)?;
    let dims = prediction.dims();
    let load_ms = ms(t);

    let mut calibration = calibrate(&prediction, labels.as_ref(), &samples, config)?;

    let t = Instant::now();
    let (metrics, input_metrics, cdf) = match &truth {
        Some(t) => {
            let thresholds = linear_thresholds(config.outputs.cdf_max, config.outputs.cdf_points);
            (
                Some(evaluate(t, &calibration.depth)?),
                Some(evaluate(t, &prediction)?),
                Some(ErrorCdf::new(t, &calibration.depth)?.evaluate(&thresholds)),
            )
        }
        None => (None, None, None),
    };
    let mut timings = std::mem::take(&mut calibration.timings_ms);
    timings.insert("load".to_string(), load_ms);
    timings.insert("metrics".to_string(), ms(t));
    timings.insert("total".to_string(), ms(t_all));

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        mode: config.mode.as_str().to_string(),
        width: dims.0,
        height: dims.1,
        inputs,
        samples_source: source.to_string(),
        sample_count: samples.len(),
        config: config.to_json(),
        groups: calibration.groups.iter().map(|g| g.report.clone()).collect(),
        residual_pixels: calibration.residual_pixels,
        input_metrics,
        metrics,
        timings_ms: timings,
        warnings: calibration.warnings.clone(),
    };
    Ok(RunOutput {
        calibration,
        samples,
        metrics,
        input_metrics,
        cdf,
        manifest,
        depth_scale: config.depth_scale,
        outputs: config.outputs.clone(),
    })
}

/// File names written by [`write_outputs`].
pub mod names {
    pub const DEPTH: &str = "calibrated.png";
    pub const METRICS: &str = "metrics.json";
    pub const CDF: &str = "cdf.csv";
    pub const MANIFEST: &str = "manifest.json";
    pub const SAMPLES: &str = "samples.csv";
}

/// Writes depth, samples, metrics, CDF, manifest and optional dumps.
/// Returns the written paths.
pub fn write_outputs(out: &mut RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        write_bytes(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    let (png, clamped) = encode_depth_png(&out.calibration.depth, out.depth_scale);
    if clamped > 0 {
        out.manifest
            .warnings
            .push(format!("{clamped} output depths outside the 16-bit range were clamped"));
    }
    put(names::DEPTH.into(), &png)?;
    put(names::SAMPLES.into(), samples_csv_string(&out.samples).as_bytes())?;
    if let Some(m) = &out.metrics {
        put(names::METRICS.into(), json_string(m).as_bytes())?;
    }
    if let Some(c) = &out.cdf {
        put(names::CDF.into(), cdf_csv(c).as_bytes())?;
    }
    for g in &out.calibration.groups {
        if out.outputs.energy_traces {
            put(format!("energy_group_{}.csv", g.group.label), energy_trace_csv(&g.result.energy_trace).as_bytes())?;
        }
        if out.outputs.obj_dumps {
            let mesh = g.group.mesh.with_vertices(g.result.positions.clone())?;
            put(format!("mesh_group_{}.obj", g.group.label), write_obj_string(&mesh).as_bytes())?;
        }
    }
    put(names::MANIFEST.into(), json_string(&out.manifest).as_bytes())?;
    Ok(written)
}

/// Runs one configuration end to end, writing to `paths.output_dir` when set.
pub fn run_complete(config: &PipelineConfig) -> Result<RunOutput> {
    let mut out = execute(config)?;
    if let Some(dir) = &config.paths.output_dir {
        write_outputs(&mut out, dir)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub stem: String,
    pub metrics: Option<MetricsReport>,
    pub input_metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub mode: String,
    pub items: Vec<BatchItem>,
    /// Mean over images that have metrics.
    pub mean_metrics: Option<MetricsReport>,
    pub mean_input_metrics: Option<MetricsReport>,
    pub failures: usize,
}

fn stems(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            if let Some(s) = p.file_stem().and_then(|s| s.to_str()) {
                out.insert(s.to_string(), p.clone());
            }
        }
    }
    Ok(out)
}

/// Processes every `prediction/<stem>.png` under `root`, pairing it with
/// `truth/<stem>.png`, `labels/<stem>.png` and `samples/<stem>.csv` when
/// present. Per-image outputs go to `<paths.output_dir>/<stem>/`, written
/// one image at a time after all images are computed. A failing image is
/// recorded and does not stop the batch.
pub fn run_batch(config: &PipelineConfig, root: &Path) -> Result<(BatchReport, Vec<Option<Error>>)> {
    config.validate()?;
    let preds = stems(&root.join("prediction"), "png")?;
    if preds.is_empty() {
        return Err(Error::Config(format!("no PNG files under {}", root.join("prediction").display())));
    }
    let truths = stems(&root.join("truth"), "png")?;
    let labels = stems(&root.join("labels"), "png")?;
    let samples = stems(&root.join("samples"), "csv")?;

    let jobs: Vec<(String, PipelineConfig)> = preds
        .iter()
        .map(|(stem, p)| {
            let mut c = config.clone();
            c.paths = Paths {
                prediction: Some(p.clone()),
                truth: truths.get(stem).cloned(),
                labels: labels.get(stem).cloned(),
                samples: samples.get(stem).cloned(),
                output_dir: config.paths.output_dir.as_ref().map(|d| d.join(stem)),
            };
            (stem.clone(), c)
        })
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.resolved_workers()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunOutput>> = pool.install(|| jobs.par_iter().map(|(_, c)| execute(c)).collect());

    let mut items = Vec::with_capacity(jobs.len());
    let mut errors = Vec::with_capacity(jobs.len());
    for ((stem, c), res) in jobs.iter().zip(results) {
        let res = res.and_then(|mut out| {
            if let Some(dir) = &c.paths.output_dir {
                write_outputs(&mut out, dir)?;
            }
            Ok(out)
        });
        match res {
            Ok(out) => {
                items.push(BatchItem {
                    stem: stem.clone(),
                    metrics: out.metrics,
                    input_metrics: out.input_metrics,
                    error: None,
                });
                errors.push(None);
            }
            Err(e) => {
                items.push(BatchItem {
                    stem: stem.clone(),
                    metrics: None,
                    input_metrics: None,
                    error: Some(e.to_string()),
                });
                errors.push(Some(e));
            }
        }
    }
    let collect = |f: fn(&BatchItem) -> Option<MetricsReport>| items.iter().filter_map(f).collect::<Vec<_>>();
    let report = BatchReport {
        mode: config.mode.as_str().to_string(),
        mean_metrics: mean_report(&collect(|i| i.metrics)),
        mean_input_metrics: mean_report(&collect(|i| i.input_metrics)),
        failures: errors.iter().filter(|e| e.is_some()).count(),
        items,
    };
    if let Some(dir) = &config.paths.output_dir {
        write_json(&dir.join("batch_summary.json"), &report)?;
    }
    Ok((report, errors))
}
