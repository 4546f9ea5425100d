use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depthforge::edgeloss::{edge_weighted_loss, semantic_edges, EdgeParams, DEFAULT_ALPHA};
use depthforge::error::{Error, ErrorKind, Result};
use depthforge::meshing::write_obj_string;
use depthforge::metrics::{cdf_csv, compare_with_reference, evaluate, linear_thresholds, load_reference_table, ErrorCdf};
use depthforge::pipeline::{
    self, calibrate, encode_edge_png, json_string, load_inputs, read_depth_png, read_label_png, run_batch,
    run_complete, write_bytes, write_depth_png, write_json, write_label_png, write_samples_csv, PipelineConfig,
    DEFAULT_DEPTH_SCALE, SCHEMA_VERSION,
};
use depthforge::sampler::{perturb, sample_uniform, synth_scene, PerturbSpec, SceneSpec};

#[derive(Parser)]
#[command(name = "depthforge", about = "Calibrate predicted depth maps against sparse depth samples", disable_version_flag = true)]
struct Cli {
    /// Print the tool and configuration schema versions.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Set a configuration value by dotted key, e.g. `arap.max_iterations=50`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Option<PipelineConfig>> {
        match &self.config {
            Some(p) => PipelineConfig::load(p, &self.overrides).map(Some),
            None if !self.overrides.is_empty() => Err(Error::Config("--override needs --config".into())),
            None => Ok(None),
        }
    }

    fn require(&self) -> Result<PipelineConfig> {
        self.load()?.ok_or_else(|| Error::Config("--config is required".into()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate one prediction end to end.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; overrides `paths.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract semantic edges from a label map.
    Edges {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        labels: PathBuf,
        /// 8-bit PNG, edges 255.
        #[arg(long)]
        out: PathBuf,
    },
    /// L1 and edge-weighted loss between two depth maps.
    Loss {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw uniform sparse samples from a depth map.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic scene to truth, labels and a ready-to-run config.
    Synth {
        /// Scene description (JSON).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Perturbation applied to the truth to make `prediction.png` (JSON).
        #[arg(long)]
        perturb: Option<PathBuf>,
        /// Also draw this many samples to `samples.csv`.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_DEPTH_SCALE)]
        depth_scale: f64,
    },
    /// Evaluate a prediction against ground truth.
    Metrics {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        prediction: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the error CDF as CSV.
        #[arg(long)]
        cdf: Option<PathBuf>,
        /// Reference table (CSV: method,samples,mae,rmse,rel) to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Row name for this prediction in the comparison.
        #[arg(long, default_value = "measured")]
        name: String,
    },
    /// Write rest and deformed group meshes as OBJ.
    Meshdump {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every prediction in a dataset directory and aggregate metrics.
    Batch {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory with prediction/, and optionally truth/, labels/, samples/.
        #[arg(long)]
        dir: PathBuf,
        /// Output directory; overrides `paths.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn depth_scale(cfg: &Option<PipelineConfig>) -> f64 {
    cfg.as_ref().map_or(DEFAULT_DEPTH_SCALE, |c| c.depth_scale)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { cfg, out } => {
            let mut c = cfg.require()?;
            if out.is_some() {
                c.paths.output_dir = out;
            }
            let res = run_complete(&c)?;
            for w in &res.manifest.warnings {
                eprintln!("warning: {w}");
            }
            match (&res.input_metrics, &res.metrics) {
                (Some(before), Some(after)) => println!(
                    "mae {:.6} -> {:.6}  rmse {:.6} -> {:.6}  rel {:.6} -> {:.6}",
                    before.mae, after.mae, before.rmse, after.rmse, before.rel, after.rel
                ),
                _ => println!("calibrated {} groups", res.calibration.groups.len()),
            }
        }
        Command::Edges { cfg, labels, out } => {
            let params = cfg.load()?.map_or_else(EdgeParams::default, |c| c.edges);
            let edges = semantic_edges(&read_label_png(&labels)?, &params)?;
            write_bytes(&out, &encode_edge_png(&edges))?;
            println!("{} edge pixels", edges.count());
        }
        Command::Loss {
            cfg,
            truth,
            prediction,
            labels,
            alpha,
            out,
        } => {
            let c = cfg.load()?;
            let scale = depth_scale(&c);
            let params = c.as_ref().map_or_else(EdgeParams::default, |c| c.edges);
            let alpha = alpha.or(c.as_ref().map(|c| c.loss.alpha)).unwrap_or(DEFAULT_ALPHA);
            let edges = semantic_edges(&read_label_png(&labels)?, &params)?;
            let report = edge_weighted_loss(&read_depth_png(&truth, scale)?, &read_depth_png(&prediction, scale)?, &edges, alpha)?;
            emit(&json_string(&report), out.as_deref())?;
        }
        Command::Sample {
            cfg,
            truth,
            count,
            seed,
            out,
        } => {
            let c = cfg.load()?;
            let sampler = c.as_ref().map(|c| c.sampler).unwrap_or_default();
            let t = read_depth_png(&truth, depth_scale(&c))?;
            let s = sample_uniform(&t, count.unwrap_or(sampler.count), seed.unwrap_or(sampler.seed))?;
            write_samples_csv(&out, &s)?;
        }
        Command::Synth {
            scene,
            out,
            perturb: perturb_path,
            samples,
            seed,
            depth_scale,
        } => synth(&scene, &out, perturb_path.as_deref(), samples, seed, depth_scale)?,
        Command::Metrics {
            cfg,
            truth,
            prediction,
            out,
            cdf,
            reference,
            name,
        } => {
            let c = cfg.load()?;
            let scale = depth_scale(&c);
            let (t, p) = (read_depth_png(&truth, scale)?, read_depth_png(&prediction, scale)?);
            let report = evaluate(&t, &p)?;
            emit(&json_string(&report), out.as_deref())?;
            if let Some(path) = cdf {
                let o = c.map(|c| c.outputs).unwrap_or_default();
                let pts = ErrorCdf::new(&t, &p)?.evaluate(&linear_thresholds(o.cdf_max, o.cdf_points));
                write_bytes(&path, cdf_csv(&pts).as_bytes())?;
            }
            if let Some(path) = reference {
                let table = compare_with_reference(&load_reference_table(&path)?, &[(name, report)]);
                eprint!("{}", table.render());
            }
        }
        Command::Meshdump { cfg, out } => {
            let c = cfg.require()?;
            let inputs = load_inputs(&c)?;
            let cal = calibrate(&inputs.prediction, inputs.labels.as_ref(), &inputs.samples, &c)?;
            for g in &cal.groups {
                let label = g.group.label;
                write_bytes(&out.join(format!("group_{label}_rest.obj")), write_obj_string(&g.group.mesh).as_bytes())?;
                let deformed = g.group.mesh.with_vertices(g.result.positions.clone())?;
                write_bytes(&out.join(format!("group_{label}_deformed.obj")), write_obj_string(&deformed).as_bytes())?;
            }
            println!("{} groups", cal.groups.len());
        }
        Command::Batch { cfg, dir, out } => {
            let mut c = cfg.require()?;
            if out.is_some() {
                c.paths.output_dir = out;
            }
            let (report, errors) = run_batch(&c, &dir)?;
            for item in &report.items {
                if let Some(e) = &item.error {
                    eprintln!("{}: {e}", item.stem);
                }
            }
            print!("{}", json_string(&report));
            if let Some(e) = errors.into_iter().flatten().next() {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn synth(scene: &Path, out: &Path, perturb_path: Option<&Path>, samples: Option<usize>, seed: u64, scale: f64) -> Result<()> {
    let text = std::fs::read_to_string(scene).map_err(|e| Error::Io {
        path: scene.to_path_buf(),
        source: e,
    })?;
    let spec: SceneSpec = serde_json::from_str(&text).map_err(|e| Error::InvalidScene(e.to_string()))?;
    let s = synth_scene(&spec)?;
    write_depth_png(&out.join("truth.png"), &s.truth, scale)?;
    write_label_png(&out.join("labels.png"), &s.labels)?;
    write_json(&out.join("intrinsics.json"), &s.intrinsics)?;

    let mut config = PipelineConfig::new(s.intrinsics);
    config.depth_scale = scale;
    config.sampler.seed = seed;
    config.paths.truth = Some("truth.png".into());
    config.paths.labels = Some("labels.png".into());
    config.paths.output_dir = Some("out".into());
    if let Some(p) = perturb_path {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
        let ps: PerturbSpec = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        write_depth_png(&out.join("prediction.png"), &perturb(&s.truth, Some(&s.labels), &ps, seed)?, scale)?;
        config.paths.prediction = Some("prediction.png".into());
    }
    if let Some(n) = samples {
        write_samples_csv(&out.join("samples.csv"), &sample_uniform(&s.truth, n, seed)?)?;
        config.paths.samples = Some("samples.csv".into());
        config.sampler.count = n;
    }
    write_json(&out.join("config.json"), &config)?;
    println!("{}x{} scene, {} objects", spec.width, spec.height, spec.objects.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.version {
        println!("depthforge {} (config schema {SCHEMA_VERSION})", pipeline::TOOL_VERSION);
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    match run(cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Input => ExitCode::from(1),
                ErrorKind::Numerical => ExitCode::from(2),
            }
        }
    }
}
