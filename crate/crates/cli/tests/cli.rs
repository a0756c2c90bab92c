use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

const DEVICE: &str = r#"
seed = 5

[system]
model = "rotating_mass"
mass = 0.2
length = 0.255
dt = 0.05
"#;

/// Short full-horizon training runs with spread start states, so that
/// noiseless data identifies Q.
fn training(extra: &str) -> String {
    format!(
        r#"{DEVICE}
[[reference]]
id = "train"
nu2 = 20
x1 = [0.0, -0.5]
input = {{ kind = "sin", amplitude = 0.01, omega = 0.07853981633974483 }}

[horizon]
nu1 = 20

[init]
half_width = [0.5235987755982988, 0.5]
anchored = [true, true]

[cost]
q = [[0.01, 0.0], [0.0, 0.01]]

[simulate]
trajectories = 25
{extra}"#
    )
}

struct Run {
    code: i32,
    stderr: String,
}

fn lqt(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_lqt-ioc")).args(args).output().unwrap();
    Run { code: out.status.code().unwrap_or(-1), stderr: String::from_utf8_lossy(&out.stderr).into_owned() }
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(lqt(&[]).code, 2);
    assert_eq!(lqt(&["estimate"]).code, 2);
    assert_eq!(lqt(&["frobnicate", "--config", "x.toml"]).code, 2);
    assert_eq!(lqt(&["--help"]).code, 0);
}

#[test]
fn bad_configs_exit_with_two_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let missing = lqt(&["simulate", "--config", s(&dir.path().join("none.toml")), "--out", s(&out)]);
    assert_eq!(missing.code, 2);

    let zero = write_config(dir.path(), "zero.toml", &training("").replace("trajectories = 25", "trajectories = 0"));
    let run = lqt(&["simulate", "--config", s(&zero), "--out", s(&out)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("simulate.trajectories"), "{}", run.stderr);

    let typo = write_config(dir.path(), "typo.toml", &training("").replace("nu1 = 20", "nu_1 = 20"));
    let run = lqt(&["simulate", "--config", s(&typo), "--out", s(&out)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("nu_1"), "{}", run.stderr);
}

#[test]
fn simulate_then_estimate_recovers_q_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "train.toml", &training(""));
    let sim = dir.path().join("sim");
    assert_eq!(lqt(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).code, 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(sim.join("manifest.json")).unwrap()).unwrap();
    let counts = manifest["details"]["counts"].as_array().unwrap();
    assert_eq!(counts.iter().map(|c| c["trajectories"].as_u64().unwrap()).sum::<u64>(), 25);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let est = dir.path().join("est");
    let run = lqt(&["estimate", "--config", s(&cfg), "--dataset", s(&sim.join("dataset.jsonl")), "--out", s(&est)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let sol = lqt_ioc_cli::commands::SolutionFile::read(&est.join("solution.json")).unwrap();
    assert!(sol.succeeded());
    let q = sol.q_est().unwrap();
    let truth = lqt_ioc::linalg::Mat::identity(2, 2) * 0.01;
    assert!((&q - &truth).norm() / truth.norm() <= 1e-3, "{q}");
    assert_eq!(sol.chains["train"].p.len(), 20);
}

#[test]
fn solver_failure_exits_with_one_and_still_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "train.toml", &training("\n[estimator]\nmax_iter = 2\n"));
    let sim = dir.path().join("sim");
    assert_eq!(lqt(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).code, 0);
    let est = dir.path().join("est");
    let run = lqt(&["estimate", "--config", s(&cfg), "--dataset", s(&sim.join("dataset.jsonl")), "--out", s(&est)]);
    assert_eq!(run.code, 1, "{}", run.stderr);
    let sol = lqt_ioc_cli::commands::SolutionFile::read(&est.join("solution.json")).unwrap();
    assert!(!sol.succeeded());
    assert!(est.join("manifest.json").is_file());
}

#[test]
fn empty_or_missing_dataset_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "train.toml", &training(""));
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "{\"schema\":1,\"nu2\":20,\"n\":2,\"m\":1}\n").unwrap();
    let out = dir.path().join("est");
    assert_eq!(lqt(&["estimate", "--config", s(&cfg), "--dataset", s(&empty), "--out", s(&out)]).code, 2);
    let none = dir.path().join("none.jsonl");
    assert_eq!(lqt(&["estimate", "--config", s(&cfg), "--dataset", s(&none), "--out", s(&out)]).code, 2);
    assert_eq!(lqt(&["estimate", "--config", s(&cfg), "--out", s(&out)]).code, 2);
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn single_case_consistency_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &training("\n[consistency]\nm_values = [25]\nseeds = [9]\n"));
    let out = dir.path().join("c");
    assert_eq!(lqt(&["consistency", "--config", s(&cfg), "--out", s(&out)]).code, 0);
    let rows = read_csv(&out.join("consistency.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..2], ["25".to_string(), "9".to_string()]);
}

#[test]
fn noiseless_consistency_grid_is_exact_at_every_m() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &training("\n[consistency]\nm_values = [10, 40]\nseeds = [1, 2, 3]\n"));
    let out = dir.path().join("c");
    assert_eq!(lqt(&["consistency", "--config", s(&cfg), "--out", s(&out)]).code, 0);
    let rows = read_csv(&out.join("consistency.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap() <= 1e-3, "{r:?}");
    }
}

#[test]
fn subsampling_more_than_the_pool_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &training("\n[consistency]\nm_values = [10, 30]\nseeds = [1]\nmode = \"subsample\"\n"),
    );
    let sim = dir.path().join("sim");
    assert_eq!(lqt(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).code, 0);
    let out = dir.path().join("c");
    let run = lqt(&["consistency", "--config", s(&cfg), "--dataset", s(&sim.join("dataset.jsonl")), "--out", s(&out)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("consistency.m_values"), "{}", run.stderr);
}

#[test]
fn zero_m_in_the_grid_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &training("\n[consistency]\nm_values = [0, 10]\nseeds = [1]\n"));
    let run = lqt(&["consistency", "--config", s(&cfg), "--out", s(&dir.path().join("c"))]);
    assert_eq!(run.code, 2);
}

fn steady(extra: &str) -> String {
    format!(
        r#"{DEVICE}
[[reference]]
id = "steady"
nu2 = 3
x1 = [0.0, 0.2]

[simulate]
trajectories = 1
mode = "steady"
{extra}"#
    )
}

#[test]
fn noise_command_reports_zero_for_noiseless_data_and_rejects_tiny_sets() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &steady("\n[noise_estimation]\nmin_samples = 2\n"));
    let sim = dir.path().join("sim");
    assert_eq!(lqt(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).code, 0);
    let out = dir.path().join("n");
    assert_eq!(lqt(&["noise", "--config", s(&cfg), "--dataset", s(&sim.join("dataset.jsonl")), "--out", s(&out)]).code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("noise.json")).unwrap()).unwrap();
    assert_eq!(v["samples"], 2);
    assert!(v["sigma_w"][0][0].as_f64().unwrap().abs() < 1e-20);

    let strict = write_config(dir.path(), "t.toml", &steady(""));
    let run = lqt(&["noise", "--config", s(&strict), "--dataset", s(&sim.join("dataset.jsonl")), "--out", s(&out)]);
    assert_ne!(run.code, 0);
    assert!(run.stderr.contains("noise samples"), "{}", run.stderr);
}

#[test]
fn predict_rejects_mismatched_references_and_dimensions() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "train.toml", &training(""));
    let sim = dir.path().join("sim");
    assert_eq!(lqt(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).code, 0);
    let data = sim.join("dataset.jsonl");
    let sol = dir.path().join("q.json");
    fs::write(&sol, r#"{"q_est": [[0.01, 0.0], [0.0, 0.01]]}"#).unwrap();
    let out = dir.path().join("p");
    let ok = lqt(&["predict", "--config", s(&cfg), "--dataset", s(&data), "--solution", s(&sol), "--out", s(&out)]);
    assert_eq!(ok.code, 0, "{}", ok.stderr);
    let rmse = read_csv(&out.join("rmse.csv"));
    assert_eq!(rmse.len(), 1);
    assert!(rmse[0][3].parse::<f64>().unwrap() > 0.0, "spread starts differ from the group mean");

    let other = write_config(dir.path(), "other.toml", &training("").replace("id = \"train\"", "id = \"other\""));
    let run = lqt(&["predict", "--config", s(&other), "--dataset", s(&data), "--solution", s(&sol), "--out", s(&out)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("train"), "{}", run.stderr);

    let small = dir.path().join("small.json");
    fs::write(&small, r#"{"q_est": [[0.01]]}"#).unwrap();
    let run = lqt(&["predict", "--config", s(&cfg), "--dataset", s(&data), "--solution", s(&small), "--out", s(&out)]);
    assert_eq!(run.code, 2);
}

#[test]
fn flags_override_the_config() {
    let dir = TempDir::new().unwrap();
    let text = training("").replace("seed = 5", &format!("seed = 5\nout_dir = {:?}", dir.path().join("cfg_out")));
    let cfg = write_config(dir.path(), "train.toml", &text);
    assert_eq!(lqt(&["simulate", "--config", s(&cfg)]).code, 0);
    assert!(dir.path().join("cfg_out/dataset.jsonl").is_file());
    let flag = dir.path().join("flag");
    assert_eq!(lqt(&["simulate", "--config", s(&cfg), "--out", s(&flag), "--seed", "6"]).code, 0);
    let a = fs::read(dir.path().join("cfg_out/dataset.jsonl")).unwrap();
    let b = fs::read(flag.join("dataset.jsonl")).unwrap();
    assert_ne!(a, b);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(flag.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 6);
}
