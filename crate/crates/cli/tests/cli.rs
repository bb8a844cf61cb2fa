use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hypercluster"));
    c.env_remove("HYPERCLUSTER_THREADS").arg("--quiet");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
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

fn mnist_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

/// Two well-separated sine classes on regular grids.
fn synth_small(dir: &Path, per_class: &str) -> PathBuf {
    ok(&[
        "synth",
        "--out-dir",
        s(dir),
        "--classes",
        "2",
        "--per-class",
        per_class,
        "--i-range",
        "64",
        "--seed",
        "3",
    ]);
    dir.join("synth.jsonl")
}

fn train_small(data: &Path, dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--out-dir",
        s(dir),
        "--data",
        s(data),
        "--r-train",
        "16,32",
        "--epochs",
        "2",
        "--batch",
        "8",
        "--seed",
        "5",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn synth_line_count_and_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = synth_small(a.path(), "100");
    let pb = synth_small(b.path(), "100");
    let text = std::fs::read_to_string(&pa).unwrap();
    assert_eq!(text.lines().count(), 200);
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert!(a.path().join("synth-config.toml").exists());
}

#[test]
fn synth_irregular_spacing_varies() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "synth",
        "--out-dir",
        s(dir.path()),
        "--per-class",
        "3",
        "--i-range",
        "40,50",
        "--irregular",
    ]);
    let text = std::fs::read_to_string(dir.path().join("synth.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let xs: Vec<f64> = v["x"].as_array().unwrap().iter().map(|p| p[0].as_f64().unwrap()).collect();
        let gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        assert!(var > 0.0);
        assert!((40..=50).contains(&xs.len()));
    }
}

#[test]
fn ingest_mnist_subset_and_bad_path() {
    let dir = tempfile::tempdir().unwrap();
    let images = mnist_file("mnist-5k-images-idx3-ubyte.gz");
    let labels = mnist_file("mnist-5k-labels-idx1-ubyte.gz");
    ok(&[
        "ingest-mnist",
        "--out-dir",
        s(dir.path()),
        "--images",
        s(&images),
        "--labels",
        s(&labels),
        "--subset",
        "100",
    ]);
    let text = std::fs::read_to_string(dir.path().join("mnist.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 100);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["x"].as_array().unwrap().len(), 784);

    let missing = dir.path().join("nope.gz");
    let out = run(&[
        "ingest-mnist",
        "--out-dir",
        s(dir.path()),
        "--force",
        "--images",
        s(&missing),
        "--labels",
        s(&labels),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.gz"));
}

#[test]
fn ingest_mnist_classes_and_resolution() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "ingest-mnist",
        "--out-dir",
        s(dir.path()),
        "--images",
        s(&mnist_file("mnist-5k-images-idx3-ubyte.gz")),
        "--labels",
        s(&mnist_file("mnist-5k-labels-idx1-ubyte.gz")),
        "--classes",
        "3,7",
        "--subset",
        "20",
        "--resolution",
        "14",
    ]);
    let text = std::fs::read_to_string(dir.path().join("mnist.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 20);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(matches!(v["label"].as_u64(), Some(3) | Some(7)));
        assert_eq!(v["u"].as_array().unwrap().len(), 196);
    }
}

#[test]
fn train_smoke_determinism_and_overwrite_guard() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "10");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(train_small(&data, &a, &[]).status.success());
    assert!(train_small(&data, &b, &[]).status.success());
    let model = std::fs::read(a.join("model.fhnc")).unwrap();
    assert_eq!(&model[..4], b"FHNC");
    assert_eq!(model, std::fs::read(b.join("model.fhnc")).unwrap());
    let trace = std::fs::read_to_string(a.join("loss.csv")).unwrap();
    assert!(trace.starts_with("step,lr,train_loss"));
    assert!(trace.lines().count() > 1);
    assert!(a.join("train-config.toml").exists());

    let again = train_small(&data, &a, &[]);
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert!(train_small(&data, &a, &["--force"]).status.success());
}

#[test]
fn worker_pool_gives_identical_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "10");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(train_small(&data, &a, &[]).status.success());
    let out = bin()
        .env("HYPERCLUSTER_THREADS", "2")
        .args([
            "train",
            "--out-dir",
            s(&b),
            "--data",
            s(&data),
            "--r-train",
            "16,32",
            "--epochs",
            "2",
            "--batch",
            "8",
            "--seed",
            "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(a.join("model.fhnc")).unwrap(),
        std::fs::read(b.join("model.fhnc")).unwrap()
    );
    let snapshot = std::fs::read_to_string(b.join("train-config.toml")).unwrap();
    assert!(snapshot.contains("threads = 2"));
}

#[test]
fn train_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "5");
    let out = run(&["train", "--out-dir", s(dir.path()), "--data", s(&data), "--r-train", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["train", "--out-dir", s(dir.path()), "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"x\":[[0.5]]}\n").unwrap();
    let out = run(&["train", "--out-dir", s(dir.path()), "--data", s(&bad), "--r-train", "8"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\n[synth]\nper-class = 4\nclasses = 3\n").unwrap();
    ok(&[
        "synth",
        "--config",
        s(&cfg),
        "--out-dir",
        s(dir.path()),
        "--classes",
        "2",
    ]);
    let text = std::fs::read_to_string(dir.path().join("synth.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 8);
    let snap: toml::Table = std::fs::read_to_string(dir.path().join("synth-config.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(snap["seed"].as_integer(), Some(11));
    assert_eq!(snap["classes"].as_integer(), Some(2));
    assert_eq!(snap["per_class"].as_integer(), Some(4));
}

#[test]
fn pipeline_on_separable_sines() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "30");
    let run_dir = dir.path().join("run");
    ok(&[
        "train",
        "--out-dir",
        s(&run_dir),
        "--data",
        s(&data),
        "--r-train",
        "16,32,64",
        "--epochs",
        "15",
        "--batch",
        "8",
    ]);
    let model = run_dir.join("model.fhnc");

    ok(&[
        "embed",
        "--out-dir",
        s(&run_dir),
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--resolution",
        "24",
    ]);
    let emb = std::fs::read_to_string(run_dir.join("embeddings-r24.csv")).unwrap();
    let header = emb.lines().next().unwrap();
    assert!(header.starts_with("id,label,w_0,"));
    // d = m = 1, four layers of width 5.
    assert_eq!(header.split(',').count(), 2 + 76);
    assert_eq!(emb.lines().count(), 61);

    let out = ok(&[
        "cluster",
        "--out-dir",
        s(&run_dir),
        "--embeddings",
        s(&run_dir.join("embeddings-r24.csv")),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("AMI 1.0000"));
    let part = std::fs::read_to_string(run_dir.join("partition.csv")).unwrap();
    assert!(part.starts_with("id,assigned,label\n"));

    let out = run(&[
        "cluster",
        "--out-dir",
        s(&run_dir),
        "--force",
        "--embeddings",
        s(&run_dir.join("embeddings-r24.csv")),
        "--k",
        "61",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = ok(&[
        "eval",
        "--out-dir",
        s(&run_dir),
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--r-train",
        "16,32,64",
        "--held-out",
        "24,128",
        "--algos",
        "kmeans,gmm",
    ]);
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(table.lines().count(), 1 + 5 * 2);
    for line in table.lines().skip(1) {
        assert_eq!(line.matches("1.000 ± 0.000").count(), 2, "{line}");
    }
    let csv = std::fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("resolution,split,algorithm,metric,mean,std,seeds\n"));
    assert_eq!(csv.lines().filter(|l| l.contains(",held-out,")).count(), 2 * 2 * 2);
    assert_eq!(csv.lines().filter(|l| l.contains(",seen,")).count(), 3 * 2 * 2);

    ok(&[
        "project",
        "--out-dir",
        s(&run_dir),
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--resolutions",
        "16,64",
    ]);
    let svg = std::fs::read_to_string(run_dir.join("projection.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed SVG");
    let markers = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("marker"))
        .count();
    assert_eq!(markers, 120);
    let proj = std::fs::read_to_string(run_dir.join("projection.csv")).unwrap();
    assert!(proj.starts_with("id,pc1,pc2,label,resolution\n"));
    assert_eq!(proj.lines().count(), 121);
}
