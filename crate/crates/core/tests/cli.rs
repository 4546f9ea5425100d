use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depthforge::pipeline::{read_depth_png, read_samples_csv, RunManifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depthforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn depthforge")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SCENE: &str = r#"{
  "width": 64, "height": 48,
  "intrinsics": {"fx": 55.0, "fy": 55.0, "cx": 31.5, "cy": 23.5},
  "objects": [
    {"kind": "plane", "normal": [0.1, 0.0, 1.0], "offset": 4.0},
    {"kind": "box", "min": [-0.8, -0.5, 2.5], "max": [0.2, 0.5, 3.0]}
  ]
}"#;

const PERTURB: &str = r#"{"amplitude": 0.03, "wavelength": 20.0, "bias": {"1": 0.2, "2": -0.15}}"#;

/// Synthesizes the small scene with prediction and samples into `dir`.
fn synth(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("scene.json"), SCENE).unwrap();
    std::fs::write(dir.join("perturb.json"), PERTURB).unwrap();
    let data = dir.join("data");
    let o = run(&[
        "synth",
        "--scene",
        s(&dir.join("scene.json")),
        "--out",
        s(&data),
        "--perturb",
        s(&dir.join("perturb.json")),
        "--samples",
        "60",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn version_flag() {
    let o = run(&["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with(concat!("depthforge ", env!("CARGO_PKG_VERSION"))));
    assert!(text.contains("schema 1"));
}

#[test]
fn synth_then_run_improves_mae() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    for f in ["truth.png", "labels.png", "prediction.png", "samples.csv", "config.json", "intrinsics.json"] {
        assert!(data.join(f).exists(), "missing {f}");
    }
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&data.join("config.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("mae "));

    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let (before, after) = (manifest.input_metrics.unwrap(), manifest.metrics.unwrap());
    assert!(after.mae < 0.5 * before.mae, "{} vs {}", after.mae, before.mae);
    assert_eq!(manifest.mode, "smd");
    assert_eq!(manifest.samples_source, "file");
    assert_eq!(manifest.sample_count, 60);
    assert!(manifest.inputs["prediction"].sha256.len() == 64);
    assert!(out.join("cdf.csv").exists());
    assert!(out.join("metrics.json").exists());

    let calibrated = read_depth_png(&out.join("calibrated.png"), 0.001).unwrap();
    for smp in read_samples_csv(&data.join("samples.csv"), 64, 48).unwrap().iter() {
        let d = calibrated.get(smp.u as usize, smp.v as usize).unwrap();
        // One 16-bit unit of quantization.
        assert!((d - smp.depth).abs() <= 0.0005 + 1e-12);
    }
}

#[test]
fn overrides_select_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let out = tmp.path().join("gmd");
    let o = run(&[
        "run",
        "--config",
        s(&data.join("config.json")),
        "--override",
        "mode=gmd",
        "--override",
        "arap.max_iterations=5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["mode"], "gmd");
    assert_eq!(m["config"]["arap"]["max_iterations"], 5);
    assert_eq!(m["groups"].as_array().unwrap().len(), 1);
}

#[test]
fn sample_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let truth = data.join("truth.png");
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    for p in [&a, &b] {
        let o = run(&["sample", "--truth", s(&truth), "--count", "25", "--seed", "9", "--out", s(p)]);
        assert!(o.status.success());
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert!(text.starts_with(b"u,v,depth_m\n"));
    assert_eq!(text.iter().filter(|&&c| c == b'\n').count(), 26);
}

#[test]
fn metrics_edges_and_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let (truth, pred, labels) = (data.join("truth.png"), data.join("prediction.png"), data.join("labels.png"));

    let reference = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/reference_nyu_200.csv");
    let cdf = tmp.path().join("cdf.csv");
    let o = run(&[
        "metrics",
        "--truth",
        s(&truth),
        "--prediction",
        s(&pred),
        "--cdf",
        s(&cdf),
        "--reference",
        s(&reference),
        "--name",
        "synthetic",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(m["mae"].as_f64().unwrap() > 0.0);
    let table = String::from_utf8(o.stderr).unwrap();
    assert!(table.contains("SMD") && table.contains("synthetic"));
    assert!(std::fs::read_to_string(&cdf).unwrap().starts_with("threshold,fraction\n"));

    let edges = tmp.path().join("edges.png");
    let o = run(&["edges", "--labels", s(&labels), "--out", s(&edges)]);
    assert!(o.status.success());
    assert!(edges.exists());

    let o = run(&["loss", "--truth", s(&truth), "--prediction", s(&pred), "--labels", s(&labels), "--alpha", "1"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((r["l1"].as_f64().unwrap() - r["edge_weighted"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn meshdump_writes_obj_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let out = tmp.path().join("meshes");
    let o = run(&[
        "meshdump",
        "--config",
        s(&data.join("config.json")),
        "--override",
        "arap.max_iterations=3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rest = std::fs::read_to_string(out.join("group_1_rest.obj")).unwrap();
    assert!(rest.lines().any(|l| l.starts_with("v ")));
    assert!(rest.lines().any(|l| l.starts_with("f ")));
    assert!(out.join("group_2_deformed.obj").exists());
}

#[test]
fn batch_matches_stems() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let root = tmp.path().join("batch");
    for (sub, file) in [("prediction", "prediction.png"), ("truth", "truth.png"), ("labels", "labels.png"), ("samples", "samples.csv")] {
        std::fs::create_dir_all(root.join(sub)).unwrap();
        let ext = Path::new(file).extension().unwrap().to_str().unwrap();
        for stem in ["a", "b"] {
            std::fs::copy(data.join(file), root.join(sub).join(format!("{stem}.{ext}"))).unwrap();
        }
    }
    let out = tmp.path().join("batch_out");
    let o = bin()
        .args(["batch", "--config", s(&data.join("config.json")), "--dir", s(&root), "--out", s(&out)])
        .env("DEPTHFORGE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["items"].as_array().unwrap().len(), 2);
    assert!(out.join("a/calibrated.png").exists());
    assert!(out.join("b/manifest.json").exists());
    assert!(out.join("batch_summary.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // Unknown subcommand.
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    // Missing file.
    let o = run(&["run", "--config", s(&tmp.path().join("nope.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    // Unknown config key.
    let data = synth(tmp.path());
    let o = run(&["run", "--config", s(&data.join("config.json")), "--override", "arap.bogus=1"]);
    assert_eq!(o.status.code(), Some(1));

    // An anchor target behind the camera cannot be deformed to.
    std::fs::write(data.join("samples.csv"), "u,v,depth_m\n10,10,-1.0\n").unwrap();
    let o = run(&["run", "--config", s(&data.join("config.json"))]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
