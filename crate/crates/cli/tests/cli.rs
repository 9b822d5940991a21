use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use perseus::format::{parse_pomdp, read_policy};
use perseus::ValueFunction;
use tempfile::TempDir;

fn perseus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perseus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = perseus(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text.trim()).unwrap()
}

fn stats_rows(dir: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(dir.join("stats.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn exact_solve_of_a_single_state_writes_one_vector() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "run");
    ok(&["solve", "--domain", "tiny:1s1a1o", "--algo", "exact", "--out", &out]);
    let policy: ValueFunction = read_policy(&fs::read_to_string(dir.path().join("run/policy.alpha")).unwrap()).unwrap();
    assert_eq!(policy.vectors.len(), 1);
    assert!((policy.vectors[0].coefficients[0] - 20.0).abs() < 1e-6);
    for f in ["stats.csv", "timing.csv", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn missing_source_is_a_usage_error() {
    assert_eq!(perseus(&["solve", "--beliefs", "10"]).status.code(), Some(2));
    assert_eq!(perseus(&["eval", "--domain", "tag"]).status.code(), Some(2));
    assert_eq!(perseus(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn eval_matches_the_geometric_sum() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "run");
    ok(&["solve", "--domain", "tiny:1s1a1o", "--algo", "exact", "--out", &out]);
    let policy = path(dir.path(), "run/policy.alpha");
    let report = json(&ok(&["eval", "--domain", "tiny:1s1a1o", "--policy", &policy, "--starts", "3", "--traj-per-start", "2"]));
    let expected = (1.0 - 0.95f64.powi(100)) / 0.05;
    assert!((report["mean"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert_eq!(report["count"].as_u64(), Some(6));
    assert!(report["std"].as_f64().unwrap() < 1e-9);
}

#[test]
fn policy_of_the_wrong_dimension_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "run");
    ok(&["solve", "--domain", "tiny:1s1a1o", "--algo", "exact", "--out", &out]);
    let policy = path(dir.path(), "run/policy.alpha");
    let res = perseus(&["eval", "--domain", "tiny:3s-chain", "--policy", &policy]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!res.stderr.is_empty());
}

#[test]
fn eval_is_reproducible() {
    let a = ok(&["eval", "--domain", "tag", "--random", "--starts", "5", "--seed", "11"]);
    let b = ok(&["eval", "--domain", "tag", "--random", "--starts", "5", "--seed", "11"]);
    let c = ok(&["eval", "--domain", "tag", "--random", "--starts", "5", "--seed", "12"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn convert_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let first = path(dir.path(), "a.pomdp");
    let second = path(dir.path(), "b.pomdp");
    ok(&["convert", "--domain", "tiny:3s-chain", "--out", &first]);
    ok(&["convert", "--in", &first, "--out", &second]);
    assert_eq!(fs::read_to_string(&first).unwrap(), fs::read_to_string(&second).unwrap());
}

#[test]
fn tag_export_reparses() {
    let dir = TempDir::new().unwrap();
    let file = path(dir.path(), "tag.pomdp");
    ok(&["convert", "--domain", "tag", "--out", &file]);
    let model = parse_pomdp(&fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(model.num_states(), 870);
    assert_eq!(model.num_actions(), 5);
    assert_eq!(model.num_observations(), 30);
}

#[test]
fn malformed_model_reports_a_position() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("bad.pomdp");
    fs::write(&file, "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0 : 0 0.5\nbogus line\n").unwrap();
    let res = perseus(&["solve", "--model", &file.display().to_string(), "--out", &path(dir.path(), "o")]);
    assert_eq!(res.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("bad.pomdp:"), "{msg}");
    let res = perseus(&["convert", "--in", &file.display().to_string(), "--out", &path(dir.path(), "x")]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn manifest_argv_reproduces_the_statistics() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "first");
    ok(&["solve", "--domain", "tiny:2s-noisy", "--beliefs", "50", "--seed", "3", "--out", &out]);
    let manifest = json(&fs::read_to_string(dir.path().join("first/manifest.json")).unwrap());
    assert_eq!(manifest["seed"].as_u64(), Some(3));
    let mut argv: Vec<String> = manifest["argv"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let pos = argv.iter().position(|a| a == "--out").unwrap();
    argv[pos + 1] = path(dir.path(), "second");
    let refs: Vec<&str> = argv.iter().map(String::as_str).collect();
    ok(&refs);
    let read = |d: &str| fs::read(dir.path().join(d).join("stats.csv")).unwrap();
    assert_eq!(read("first"), read("second"));
    let policy = |d: &str| fs::read(dir.path().join(d).join("policy.alpha")).unwrap();
    assert_eq!(policy("first"), policy("second"));
}

#[test]
fn tag_value_sum_never_decreases() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "tag");
    ok(&["solve", "--domain", "tag", "--beliefs", "10000", "--algo", "perseus", "--seed", "1", "--max-stages", "40", "--out", &out]);
    let rows = stats_rows(&dir.path().join("tag"));
    assert!(!rows.is_empty());
    for w in rows.windows(2) {
        assert!(w[1][1] >= w[0][1] - 1e-6 * w[0][1].abs().max(1.0));
    }
    for r in &rows {
        assert!(r[2] >= 1.0 && r[2] <= 10000.0);
    }
}

#[test]
fn continuous_run_records_sample_provenance() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "c");
    ok(&["solve", "--domain", "tiny:3s-chain", "--algo", "perseus-continuous", "--beliefs", "100", "--max-stages", "10", "--out", &out]);
    let text = fs::read_to_string(dir.path().join("c/stats.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.ends_with("freq_improved_uniform,freq_improved_gauss,freq_improved_old,freq_not_improved"));
    for row in stats_rows(&dir.path().join("c")) {
        let total: f64 = row[row.len() - 4..].iter().sum();
        assert!((total - 1.0).abs() < 1e-9 || total == 0.0, "{row:?}");
    }
}

#[test]
fn qmdp_writes_sweeps() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "q");
    ok(&["solve", "--domain", "tiny:2s-symmetric", "--algo", "qmdp", "--out", &out]);
    let text = fs::read_to_string(dir.path().join("q/stats.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("sweep,residual"));
    let policy: ValueFunction = read_policy(&fs::read_to_string(dir.path().join("q/policy.alpha")).unwrap()).unwrap();
    assert_eq!(policy.vectors.len(), 3);
}

#[test]
fn navigation_solve_then_eval() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "nav");
    ok(&["solve", "--domain", "cnav", "--algo", "perseus-continuous", "--beliefs", "200", "--max-stages", "5", "--out", &out]);
    let policy = path(dir.path(), "nav/policy.alpha");
    let centers = path(dir.path(), "nav/centers.csv");
    assert_eq!(perseus(&["eval", "--domain", "cnav", "--policy", &policy]).status.code(), Some(2));
    let report = json(&ok(&["eval", "--domain", "cnav", "--policy", &policy, "--centers", &centers, "--starts", "5", "--traj-per-start", "2"]));
    assert_eq!(report["count"].as_u64(), Some(10));
    assert!(report["mean"].as_f64().unwrap().is_finite());
}
