use std::path::Path;
use std::process::{Command, Output};

use pointdon::data::{Manifest, Split, MANIFEST_FILE};
use pointdon::TriMesh;

const SMALL: &str = r#"
[model]
architecture = "point_deeponet"
latent = 8
branch_widths = [8]
encoder_widths = [8]
trunk_widths = [8]
fusion_widths = [8]
points = 32

[data.generator]
samples = 40
nodes = 96

[train]
iterations = 20
batch_size = 4
eval_interval = 10
"#;

fn pointdon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointdon"))
        .args(args)
        .env("POINTDON_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pointdon(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the small config and a dataset generated from it.
fn setup(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.join("data");
    ok(&["generate", "--config", s(&cfg), "--seed", "3", "--out", s(&data)]);
    (cfg, data)
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(pointdon(&[]).status.code(), Some(2));
    assert_eq!(pointdon(&["frobnicate"]).status.code(), Some(2));
    let out = pointdon(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(pointdon(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.pdc");
    let out = pointdon(&["inspect", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = pointdon(&["generate", "--set", "train.no_such_key=1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn generate_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(dir.path());
    assert!(data.join(MANIFEST_FILE).exists());
    assert!(data.join("config.toml").exists());
    let out = pointdon(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seeded_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["train", "--config", s(&cfg), "--dataset", s(&data), "--seed", "7", "--out", s(out)]);
    }
    let ha = std::fs::read_to_string(a.join("history.csv")).unwrap();
    let hb = std::fs::read_to_string(b.join("history.csv")).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(ha.lines().next().unwrap(), "iteration,train_loss,val_loss");
    assert_eq!(ha.lines().count(), 3);
    assert_eq!(
        std::fs::read(a.join("checkpoint.pdc")).unwrap(),
        std::fs::read(b.join("checkpoint.pdc")).unwrap()
    );
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(dir.path());
    let first = dir.path().join("first");
    ok(&[
        "train", "--config", s(&cfg), "--dataset", s(&data), "--seed", "11",
        "--set", "train.lr=2e-3", "--set", "train.iterations=10", "--out", s(&first),
    ]);
    let echo = first.join("config.toml");
    let text = std::fs::read_to_string(&echo).unwrap();
    assert!(text.contains("lr = 0.002"), "{text}");
    assert!(text.contains("seed = 11"), "{text}");
    let second = dir.path().join("second");
    ok(&["train", "--config", s(&echo), "--dataset", s(&data), "--out", s(&second)]);
    assert_eq!(
        std::fs::read(first.join("history.csv")).unwrap(),
        std::fs::read(second.join("history.csv")).unwrap()
    );
    assert_eq!(std::fs::read_to_string(second.join("config.toml")).unwrap(), text);
}

#[test]
fn eval_reports_four_fields_by_three_labels_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(dir.path());
    let manifest = Manifest::load(&data.join(MANIFEST_FILE)).unwrap();
    let mut labels: Vec<_> = manifest
        .samples
        .iter()
        .filter(|e| e.split == Split::Val)
        .map(|e| e.label)
        .collect();
    labels.sort_by_key(|l| l.code());
    labels.dedup();
    assert_eq!(labels.len(), 3, "fixture must cover every load label");

    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&run)]);
    let report = dir.path().join("report.csv");
    let out = ok(&[
        "eval", "--checkpoint", s(&run.join("checkpoint.pdc")), "--dataset", s(&data),
        "--out", s(&report),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean R²"));
    let mut r = csv::Reader::from_path(&report).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["mode", "field", "label", "n", "samples", "mae", "rmse", "r2"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    for mode in ["sampled", "full"] {
        assert_eq!(rows.iter().filter(|row| &row[0] == mode).count(), 12, "{mode}");
    }
    for row in &rows {
        let (mae, rmse): (f64, f64) = (row[5].parse().unwrap(), row[6].parse().unwrap());
        assert!(rmse >= mae);
    }
}

#[test]
fn sdf_of_unit_sphere_at_center() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("sphere.obj");
    std::fs::write(&obj, TriMesh::icosphere([0.0; 3], 1.0, 3).to_obj()).unwrap();
    let out = ok(&["sdf", "--mesh", s(&obj), "--probe", "0,0,0", "--probe", "0,0,2"]);
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let d: Vec<f64> = r.records().map(|row| row.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(d.len(), 2);
    assert!((d[0] + 1.0).abs() <= 0.02, "{}", d[0]);
    assert!((d[1] - 1.0).abs() <= 0.02, "{}", d[1]);

    let sampled = dir.path().join("inside.csv");
    ok(&["sdf", "--mesh", s(&obj), "--sample", "200", "--out", s(&sampled)]);
    let mut r = csv::Reader::from_path(&sampled).unwrap();
    let rows: Vec<f64> = r.records().map(|row| row.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|&v| v <= 0.0));
}

#[test]
fn predict_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&run)]);
    let ckpt = run.join("checkpoint.pdc");

    let manifest = Manifest::load(&data.join(MANIFEST_FILE)).unwrap();
    let entry = &manifest.samples[0];
    let out = ok(&["predict", "--checkpoint", s(&ckpt), "--dataset", s(&data), "--sample", &entry.id]);
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x", "y", "z", "u_x", "u_y", "u_z", "von_mises"]
    );
    assert_eq!(r.records().count(), entry.nodes);

    let obj = dir.path().join("block.obj");
    std::fs::write(&obj, TriMesh::cuboid([0.0; 3], [0.6, 0.3, 0.2]).to_obj()).unwrap();
    let out = ok(&[
        "predict", "--checkpoint", s(&ckpt), "--mesh", s(&obj), "--mass", "2", "--force", "5",
        "--direction", "0,0,-1", "--nodes", "500",
    ]);
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(r.records().count(), 500);

    let out = ok(&["inspect", s(&ckpt)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("point_deeponet") && text.contains("parameters"), "{text}");
    let out = ok(&["inspect", s(&data)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("samples      40 (32 train, 8 val)"), "{text}");
}
