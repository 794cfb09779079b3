//! End-to-end tests of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forkjoin"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const BASE: &str = r#"
[system]
n = 20
k = 1
lambda = 0.4
mu = 1.0
alpha = 0.6

[task_size]
dist = "deterministic"
value = 1.0

[slowdown]
model = "exponential"

[policy]
name = "baseline"

[sim]
horizon = 60.0
warmup = 5.0
seed = 424242
"#;

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn golden_per_job_csv_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    write(&cfg, BASE);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_exit(&res, 0);
    }
    let a = std::fs::read(out_a.join("jobs.csv")).unwrap();
    let b = std::fs::read(out_b.join("jobs.csv")).unwrap();
    assert_eq!(a, b, "per-job CSV differs between identical runs");

    // pinned golden file: catches any unintended change to the sampled
    // dynamics, the PRNG streams, or the serialization format
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_jobs.csv");
    let expected = std::fs::read(&golden).unwrap();
    assert_eq!(
        a,
        expected,
        "jobs.csv deviates from the golden file; if the change is intended, regenerate tests/data/golden_jobs.csv"
    );

    // provenance line embeds the resolved config and seed
    let text = String::from_utf8(a).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# {"));
    assert!(first.contains("\"seed\":424242"));
    assert!(first.contains("\"lambda\":0.4"));
    // decimal points, LF endings, exact header
    assert!(text.lines().nth(1).unwrap()
        == "job_id,arrival_time,task_size,subsystem,replicas_started,delay,service_time,queueing_time");
    assert!(!text.contains('\r'));
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    write(&cfg, BASE);
    let out = dir.path().join("o");
    let res = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_exit(&res, 0);
    let text = std::fs::read_to_string(out.join("jobs.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains("\"seed\":7"));
}

#[test]
fn config_errors_exit_one_with_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    // alpha outside (1/2, 1)
    write(&cfg, &BASE.replace("alpha = 0.6", "alpha = 0.3"));
    let res = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 1);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("[system]"), "{err}");

    // unknown keys rejected
    write(&cfg, &format!("{BASE}\nmystery = 1\n"));
    let res = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 1);
}

#[test]
fn frec_below_partition_minimum_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    // lambda = 0.49 leaves almost no slack: subsystems need more than n
    write(
        &cfg,
        &BASE
            .replace("name = \"baseline\"", "name = \"frec\"")
            .replace("lambda = 0.4", "lambda = 0.49")
            .replace("n = 20", "n = 100"),
    );
    let res = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 1);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("n too small") || err.contains("subsystem"), "{err}");
}

#[test]
fn unstable_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    write(
        &cfg,
        &BASE
            .replace("lambda = 0.4", "lambda = 0.55")
            .replace("horizon = 60.0", "horizon = 50000.0"),
    );
    let out = dir.path().join("o");
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&res, 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("instability suspected"));
    // partial outputs still written
    assert!(out.join("summary.json").exists());
}

#[test]
fn bound_reports_values_and_structured_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    write(&cfg, &BASE.replace("k = 1", "k = 2").replace("lambda = 0.4", "lambda = 0.25"));
    let res = run(&["bound", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 0);
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let lower = v["lower_bound_delay"].as_f64().unwrap();
    assert!((lower - 41.0 / 30.0).abs() < 1e-9);
    assert!((v["policy_asymptote"].as_f64().unwrap() - 41.0 / 30.0).abs() < 1e-9);
    assert!(v["gap"].as_f64().unwrap().abs() < 1e-9);

    // unstable parameters: structured error JSON citing the threshold
    write(&cfg, &BASE.replace("lambda = 0.4", "lambda = 0.6"));
    let res = run(&["bound", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 1);
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!((v["stability_threshold"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(v["error"].as_str().unwrap().contains("threshold"));
}

#[test]
fn optimize_then_simulate_size_based_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    write(
        &cfg,
        r#"
[system]
n = 2000
k = 1
lambda = 0.25
mu = 1.0
alpha = 0.6

[policy]
name = "sb-frec"
profile_path = "prof/profile.csv"

[sim]
horizon = 40.0
warmup = 4.0
seed = 9

[optimize]
slack_exponent = 0.6
"#,
    );
    let prof = dir.path().join("prof");
    let res = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", prof.to_str().unwrap()]);
    assert_exit(&res, 0);
    let text = std::fs::read_to_string(prof.join("profile.csv")).unwrap();
    let parsed = forkjoin_core::optimizer::ReplicationProfile::from_csv(&text).unwrap();
    assert_eq!(parsed.k, 1);
    // x-independent slowdowns at quarter load: support on {2, 3}
    let support: Vec<u32> = parsed.rows[0].iter().map(|&(r, _)| r).collect();
    assert_eq!(support, vec![2, 3]);

    let out = dir.path().join("o");
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&res, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["policy"], "sb-frec");

    // malformed grid in [optimize] names the section
    write(
        &cfg,
        &std::fs::read_to_string(&cfg).unwrap().replace(
            "slack_exponent = 0.6",
            "slack_exponent = 0.6\ngrid = [[0.5, 0.7], [1.5, 0.5]]",
        ),
    );
    let res = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("[optimize]"));
}

#[test]
fn sweep_writes_long_format_rows_and_continues_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    // long enough that the supercritical point trips the instability abort
    write(&cfg, &BASE.replace("n = 20", "n = 50").replace("horizon = 60.0", "horizon = 3000.0"));
    let out = dir.path().join("sw");
    // second point is unstable and must land in the error column
    let res = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--param",
        "lambda",
        "--values",
        "0.3,0.55",
    ]);
    assert_exit(&res, 0);
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("lambda,0.3,0,"));
    let err_row = rows.iter().find(|r| r.starts_with("lambda,0.55")).unwrap();
    assert!(err_row.contains("instability") || err_row.contains("horizon"), "{err_row}");

    // empty list is a usage error
    let res = run(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "lambda"]);
    assert_exit(&res, 1);
}

#[test]
fn validate_passes_by_default_and_fails_on_adversarial_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    write(&cfg, BASE);
    let res = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_exit(&res, 0);
    let out = String::from_utf8_lossy(&res.stdout);
    assert_eq!(out.matches("ok:").count(), 6, "{out}");

    // adversarial non-convex table: E[min] decreasing but r*E[min] kinked
    let table = dir.path().join("table.csv");
    write(&table, "1.0,1.0,0.8,0.4\n2.0,1.0,0.7,0.5\n");
    let res = run(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--convexity-table",
        table.to_str().unwrap(),
    ]);
    assert_exit(&res, 1);
    let out = String::from_utf8_lossy(&res.stdout);
    assert!(out.contains("FAIL: replica-weighted minimum"), "{out}");
}
