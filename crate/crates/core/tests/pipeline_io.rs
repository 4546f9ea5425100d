use std::path::Path;

use depthforge::camera::CameraIntrinsics;
use depthforge::pipeline::*;
use depthforge::sampler::{sample_uniform, synth_scene, SceneObject, SceneSpec};
use depthforge::types::{DepthMap, LabelMap};

fn scene() -> (DepthMap, LabelMap, CameraIntrinsics) {
    let s = synth_scene(&SceneSpec {
        width: 40,
        height: 30,
        intrinsics: CameraIntrinsics::new(35.0, 35.0, 19.5, 14.5),
        objects: vec![
            SceneObject::Plane {
                normal: [0.0, 0.2, 1.0],
                offset: 3.0,
                clip: None,
            },
            SceneObject::Box {
                min: [-0.5, -0.5, 2.0],
                max: [0.5, 0.5, 2.4],
            },
        ],
        background: None,
    })
    .unwrap();
    (s.truth, s.labels, s.intrinsics)
}

#[test]
fn depth_png_quantizes_to_millimeters() {
    let (truth, _, _) = scene();
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("d.png");
    assert_eq!(write_depth_png(&p, &truth, 0.001).unwrap(), 0);
    let back = read_depth_png(&p, 0.001).unwrap();
    assert_eq!(back.validity(), truth.validity());
    for (a, b) in back.values().iter().zip(truth.values()) {
        assert!((a - b).abs() <= 0.0005 + 1e-12);
    }
    // Re-encoding decoded data is lossless.
    assert_eq!(encode_depth_png(&back, 0.001).0, std::fs::read(&p).unwrap());
}

#[test]
fn zero_units_are_invalid() {
    let bytes = encode_gray16_png(3, 1, &[0, 1500, 65535]);
    let d = decode_depth_png(&bytes, 0.001, Path::new("x.png")).unwrap();
    assert_eq!(d.get(0, 0), None);
    assert_eq!(d.get(1, 0), Some(1.5));
    assert!((d.get(2, 0).unwrap() - 65.535).abs() < 1e-12);
}

#[test]
fn eight_bit_depth_rejected_eight_bit_labels_accepted() {
    let bytes = encode_gray8_png(2, 2, &[0, 1, 2, 3]);
    assert!(decode_depth_png(&bytes, 0.001, Path::new("d.png")).is_err());
    let l = decode_label_png(&bytes, Path::new("l.png")).unwrap();
    assert_eq!(l.labels(), &[0, 1, 2, 3]);
}

#[test]
fn label_png_round_trip() {
    let (_, labels, _) = scene();
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("l.png");
    write_label_png(&p, &labels).unwrap();
    assert_eq!(read_label_png(&p).unwrap(), labels);
}

#[test]
fn samples_csv_round_trip_is_exact() {
    let (truth, _, _) = scene();
    let s = sample_uniform(&truth, 50, 3).unwrap();
    let text = samples_csv_string(&s);
    assert!(text.starts_with("u,v,depth_m\n"));
    let back = parse_samples_csv(&text, 40, 30, Path::new("s.csv")).unwrap();
    assert_eq!(back.as_slice(), s.as_slice());
}

#[test]
fn samples_csv_rejects_bad_rows() {
    let p = Path::new("s.csv");
    assert!(parse_samples_csv("u,v,depth_m\n45,0,1.0\n", 40, 30, p).is_err());
    assert!(parse_samples_csv("u,v,depth_m\n1,1,abc\n", 40, 30, p).is_err());
    assert!(parse_samples_csv("x,y,z\n1,1,1.0\n", 40, 30, p).is_err());
}

#[test]
fn sha256_of_known_input() {
    assert_eq!(
        sha256_hex(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn run_complete_writes_outputs_and_generates_samples() {
    let (truth, labels, k) = scene();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut biased = truth.clone();
    for v in 0..30 {
        for u in 0..40 {
            if let Some(d) = truth.get(u, v) {
                biased.set(u, v, d + 0.12);
            }
        }
    }
    write_depth_png(&dir.join("t.png"), &truth, 0.001).unwrap();
    write_depth_png(&dir.join("p.png"), &biased, 0.001).unwrap();
    write_label_png(&dir.join("l.png"), &labels).unwrap();
    let cfg_text = format!(
        r#"{{"intrinsics": {{"fx": {}, "fy": {}, "cx": {}, "cy": {}}},
            "sampler": {{"count": 40, "seed": 5}},
            "outputs": {{"energy_traces": true, "obj_dumps": true}},
            "paths": {{"prediction": "p.png", "truth": "t.png", "labels": "l.png", "output_dir": "o"}}}}"#,
        k.fx, k.fy, k.cx, k.cy
    );
    std::fs::write(dir.join("c.json"), cfg_text).unwrap();
    let config = PipelineConfig::load(&dir.join("c.json"), &[]).unwrap();
    let out = run_complete(&config).unwrap();
    assert_eq!(out.manifest.samples_source, "generated");
    assert_eq!(out.samples.len(), 40);
    assert!(out.metrics.unwrap().mae < 0.2 * out.input_metrics.unwrap().mae);
    let o = dir.join("o");
    for f in [names::DEPTH, names::METRICS, names::CDF, names::MANIFEST, names::SAMPLES] {
        assert!(o.join(f).exists(), "missing {f}");
    }
    assert!(o.join("energy_group_1.csv").exists());
    assert!(o.join("mesh_group_2.obj").exists());
    let m: RunManifest = serde_json::from_slice(&std::fs::read(o.join(names::MANIFEST)).unwrap()).unwrap();
    assert_eq!(m.inputs["truth"].sha256, sha256_hex(&std::fs::read(dir.join("t.png")).unwrap()));
    assert_eq!(m.groups.len(), 2);
    assert!(m.groups.iter().all(|g| g.final_energy <= g.initial_energy));
}
