//! End-to-end smoke tests for the `tnp` binary: every subcommand is invoked
//! as a real process on tiny configurations.

use std::path::Path;
use std::process::{Command, Output};

fn tnp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnp"))
        .args(args)
        .output()
        .expect("spawn tnp")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_lists_subcommands() {
    let out = tnp(&["--help"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["pretrain", "metatrain", "run", "bench", "report"] {
        assert!(text.contains(name), "missing subcommand {name} in help");
    }
}

#[test]
fn unparseable_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = \"not a number\"\n").unwrap();
    let out = tnp(&["bench", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("bad.toml"), "stderr should name the file: {text}");
}

fn grid_config(out_dir: &Path, seed: u64, methods: &str) -> String {
    format!(
        r#"
seed = {seed}
methods = [{methods}]
num_tasks = 2
num_seeds = 2
out_dir = "{}"
parallelism = 1

[family]
kind = "quad-shift"
dim = 2

[smbo]
trials = 4
num_initial = 2
num_candidates = 32
"#,
        out_dir.display()
    )
}

#[test]
fn bench_writes_artifacts_and_report_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let config = dir.path().join("grid.toml");
    std::fs::write(&config, grid_config(&out_dir, 99, r#""random", "gp""#)).unwrap();

    let out = tnp(&["bench", "--config", config.to_str().unwrap()]);
    assert_ok(&out);
    for name in ["trials.csv", "metrics.csv", "summary.csv"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    // report on the produced metrics must reproduce the summary byte for byte
    let regenerated = dir.path().join("summary2.csv");
    let metrics = out_dir.join("metrics.csv");
    let out = tnp(&[
        "report",
        metrics.to_str().unwrap(),
        "--out",
        regenerated.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let original = std::fs::read(out_dir.join("summary.csv")).unwrap();
    let again = std::fs::read(&regenerated).unwrap();
    assert_eq!(original, again);
}

#[test]
fn bench_seed_and_out_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let config = dir.path().join("grid.toml");
    std::fs::write(&config, grid_config(&out_a, 99, r#""random""#)).unwrap();
    assert_ok(&tnp(&["bench", "--config", config.to_str().unwrap()]));

    let out_b = dir.path().join("b");
    assert_ok(&tnp(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "100",
        "--out",
        out_b.to_str().unwrap(),
    ]));
    let a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_ne!(a, b, "different seeds should change the metrics");
}

#[test]
fn run_prints_records_and_best() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 11,
  "methods": ["random"],
  "family": {"kind": "quad-shift", "dim": 2},
  "num_tasks": 1,
  "num_seeds": 1,
  "smbo": {"trials": 3, "num_initial": 2, "num_candidates": 16},
  "out_dir": "unused"
}"#,
    )
    .unwrap();
    let out = tnp(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--method",
        "random",
        "--task",
        "0",
    ]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "trial,x,y,best_so_far,millis");
    assert_eq!(lines.len(), 1 + 5 + 1, "header, five records, best line");
    assert!(lines[6].starts_with("# best "), "got {:?}", lines[6]);
}

#[test]
fn pretrain_metatrain_then_transfer_bench() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let meta = dir.path().join("meta.json");

    let pretrain = dir.path().join("pretrain.toml");
    std::fs::write(
        &pretrain,
        format!(
            r#"
seed = 5
batches = 3
functions_per_batch = 2
points_per_function = 8
learning_rate = 1e-2
out = "{}"

[arch]
input_dim = 2
embed_dim = 8
num_heads = 2
hidden = [8]
"#,
            params.display()
        ),
    )
    .unwrap();
    assert_ok(&tnp(&["pretrain", "--config", pretrain.to_str().unwrap()]));
    assert!(params.is_file());

    let metatrain = dir.path().join("metatrain.toml");
    std::fs::write(
        &metatrain,
        format!(
            r#"
seed = 5
params = "{}"
num_historical = 2
first_member = 3
historical_trials = 5
historical_base = "random"
n_init = 2
epochs = 1
out = "{}"

[family]
kind = "quad-shift"
dim = 2
"#,
            params.display(),
            meta.display()
        ),
    )
    .unwrap();
    assert_ok(&tnp(&["metatrain", "--config", metatrain.to_str().unwrap()]));
    assert!(meta.is_file());

    let out_dir = dir.path().join("artifacts");
    let bench = dir.path().join("bench.toml");
    std::fs::write(
        &bench,
        format!(
            r#"
seed = 33
methods = ["tnp"]
num_tasks = 1
num_seeds = 1
num_historical = 2
historical_trials = 5
historical_base = "random"
out_dir = "{}"
meta_path = "{}"

[family]
kind = "quad-shift"
dim = 2

[smbo]
trials = 2
num_initial = 2
num_candidates = 16
"#,
            out_dir.display(),
            meta.display()
        ),
    )
    .unwrap();
    assert_ok(&tnp(&["bench", "--config", bench.to_str().unwrap()]));
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().collect();
    assert_eq!(rows.len(), 1 + 2, "header plus one row per model-guided trial");
    assert!(rows[1].starts_with("tnp,"));
}
