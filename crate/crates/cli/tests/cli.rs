//! End-to-end tests of the binary: every subcommand, config plumbing, and
//! byte-level reproducibility of the report files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simplex-track"))
}

fn run_ok(args: &[&str], dir: &Path) -> String {
    let out = bin()
        .args(args)
        .args(["--out-dir", dir.to_str().unwrap()])
        .env_remove("SIMPLEX_TRACK_CONFIG")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_err(args: &[&str]) -> Output {
    let out = bin()
        .args(args)
        .env_remove("SIMPLEX_TRACK_CONFIG")
        .output()
        .expect("binary runs");
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    out
}

fn reference_set() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference_safe_set.sst")
}

#[test]
fn help_lists_subcommands_and_defaults() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["sweep", "build-set", "run", "bench", "export-contour"] {
        assert!(text.contains(cmd), "missing {cmd} in --help");
    }
    for flag in ["--v-max", "--omega-max", "--lookahead", "--safety-bound", "--workers"] {
        assert!(text.contains(flag), "missing {flag} in --help");
    }
    assert!(text.contains("[default: 0.5]"), "paper defaults shown in help");
}

#[test]
fn sweep_build_set_and_contour_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    let summary = run_ok(
        &["sweep", "--quick", "--n-paths", "5", "--workers", "2"],
        dir,
    );
    assert!(summary.contains("grid states: 880 (11 x 16 x 5)"));
    assert!(summary.contains("records: 4400 (5 per state)"));
    let records = dir.join("records.csv");
    assert!(records.exists());

    // identical sweep with one worker: byte-identical records
    let solo = dir.join("solo");
    std::fs::create_dir(&solo).unwrap();
    run_ok(
        &["sweep", "--quick", "--n-paths", "5", "--workers", "1"],
        &solo,
    );
    assert_eq!(
        std::fs::read(&records).unwrap(),
        std::fs::read(solo.join("records.csv")).unwrap()
    );

    let out = run_ok(
        &[
            "build-set",
            "--quick",
            "--n-paths",
            "5",
            "--records",
            records.to_str().unwrap(),
        ],
        dir,
    );
    let set_file = dir.join("safe_set.sst");
    assert!(set_file.exists());
    // printed dwell matches the stored one
    let printed_dwell = out
        .lines()
        .find(|l| l.contains("dwell_time:"))
        .and_then(|l| l.split_whitespace().rev().nth(1).map(str::to_string))
        .unwrap();
    let stored = std::fs::read_to_string(&set_file).unwrap();
    let stored_dwell = stored
        .lines()
        .find(|l| l.starts_with("dwell_time "))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .to_string();
    assert_eq!(printed_dwell, stored_dwell);

    // rebuilding from the same records is byte-identical
    let rebuild = dir.join("rebuild");
    std::fs::create_dir(&rebuild).unwrap();
    run_ok(
        &[
            "build-set",
            "--quick",
            "--n-paths",
            "5",
            "--records",
            records.to_str().unwrap(),
        ],
        &rebuild,
    );
    assert_eq!(
        std::fs::read(&set_file).unwrap(),
        std::fs::read(rebuild.join("safe_set.sst")).unwrap()
    );

    let contour = run_ok(
        &[
            "export-contour",
            "--quick",
            "--n-paths",
            "5",
            "--records",
            records.to_str().unwrap(),
        ],
        dir,
    );
    assert!(contour.contains("176 cells"));
    let text = std::fs::read_to_string(dir.join("contour.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 176);
    assert!(text.starts_with("d0,theta0,all_converged,worst_max_d,worst_t_conv\n"));
}

#[test]
fn build_set_fails_explicitly_when_nothing_is_safe() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    run_ok(&["sweep", "--quick", "--n-paths", "3"], dir);
    let out = run_err(&[
        "build-set",
        "--quick",
        "--n-paths",
        "3",
        "--records",
        dir.join("records.csv").to_str().unwrap(),
        "--safety-bound",
        "0.01",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no grid cell survives"), "stderr: {stderr}");
}

#[test]
fn run_pure_pursuit_on_cosine_writes_metrics_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let out = run_ok(&["run", "--controller", "pp", "--track", "cosine"], dir);
    assert!(out.contains("run pp on cosine"));

    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("run_pp_cosine_metrics.json")).unwrap(),
    )
    .unwrap();
    let mean_v = metrics["mean_v"].as_f64().unwrap();
    assert!((mean_v - 0.5).abs() < 0.05, "mean_v = {mean_v}");
    assert!(metrics["completion"].as_bool().unwrap());

    let trace = std::fs::read_to_string(dir.join("run_pp_cosine.csv")).unwrap();
    assert!(trace.starts_with("t,mode,d_signed,theta_rel,v,omega\n"));
    assert!(trace.lines().count() > 100);
}

#[test]
fn run_simplex_on_square_records_assurance_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let out = run_ok(
        &[
            "run",
            "--controller",
            "simplex-unsafe",
            "--track",
            "square",
            "--safe-set",
            reference_set().to_str().unwrap(),
        ],
        dir,
    );
    assert!(out.contains("switches to ha"));
    let trace = std::fs::read_to_string(dir.join("run_simplex-unsafe_square.csv")).unwrap();
    assert!(trace.contains(",ha,"), "no assurance episodes in the trace");
    assert!(trace.contains(",hp,"));
}

#[test]
fn policy_file_controller_runs_from_a_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let policy = dir.join("policy.csv");
    // a single-bin constant policy: creep along at 0.3 m/s
    std::fs::write(&policy, "-2,2,-3.2,3.2,0.3,0\n").unwrap();
    run_ok(
        &[
            "run",
            "--controller",
            "policy",
            "--track",
            "cosine",
            "--policy-file",
            policy.to_str().unwrap(),
        ],
        dir,
    );
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("run_policy_cosine_metrics.json")).unwrap(),
    )
    .unwrap();
    assert!((metrics["mean_v"].as_f64().unwrap() - 0.3).abs() < 1e-9);

    // rejected at load: a command over the speed limit
    std::fs::write(&policy, "-2,2,-3.2,3.2,1.5,0\n").unwrap();
    let out = run_err(&[
        "run",
        "--controller",
        "policy",
        "--track",
        "cosine",
        "--policy-file",
        policy.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("violates robot limits"), "stderr: {stderr}");
}

#[test]
fn simplex_without_a_safe_set_points_at_the_pipeline() {
    let out = run_err(&[
        "run",
        "--controller",
        "simplex-scripted",
        "--track",
        "cosine",
        "--safe-set",
        "/nonexistent/set.sst",
        "--out-dir",
        "/tmp",
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cannot load safe set"), "stderr: {stderr}");
}

#[test]
fn unknown_identifiers_are_usage_errors() {
    let out = run_err(&["run", "--controller", "warp9", "--track", "cosine"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown controller id"), "stderr: {stderr}");

    let out = run_err(&["run", "--controller", "pp", "--track", "triangle"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown track id"), "stderr: {stderr}");
}

#[test]
fn invalid_config_exits_nonzero_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"sweep": {"step_size": 0.0}}"#).unwrap();
    let out = run_err(&[
        "--config",
        config.to_str().unwrap(),
        "sweep",
        "--quick",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("sweep") && stderr.contains("step_size"),
        "stderr: {stderr}"
    );
}

#[test]
fn config_file_comes_from_the_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("env.json");
    // a distinctive quick-like grid: 6 x 16 x 5 states
    std::fs::write(
        &config,
        r#"{"sweep": {"d0": {"min": -1.0, "step": 0.4, "count": 6},
                      "theta0": {"min": -1.5708, "step": 0.2, "count": 16},
                      "rp": {"min": 0.0, "step": 0.1, "count": 5},
                      "n_paths": 2}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["sweep", "--out-dir", dir.path().to_str().unwrap()])
        .env("SIMPLEX_TRACK_CONFIG", &config)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("grid states: 480 (6 x 16 x 5)"), "{stdout}");
}

#[test]
fn bench_smoke_run_is_byte_reproducible() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let set = reference_set();
    for (dir, workers) in [(dir_a.path(), "2"), (dir_b.path(), "1")] {
        run_ok(
            &[
                "bench",
                "--n-runs",
                "2",
                "--workers",
                workers,
                "--safe-set",
                set.to_str().unwrap(),
            ],
            dir,
        );
    }
    for file in ["report.csv", "runs.csv", "report.json"] {
        assert_eq!(
            std::fs::read(dir_a.path().join(file)).unwrap(),
            std::fs::read(dir_b.path().join(file)).unwrap(),
            "{file} differs across worker counts"
        );
    }
    let report = std::fs::read_to_string(dir_a.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 10, "5 controllers x 2 tracks");
    let runs = std::fs::read_to_string(dir_a.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 20, "one line per run");
    assert!(dir_a.path().join("meta.json").exists());
}

#[test]
fn unwritable_output_directory_is_an_io_error() {
    let out = run_err(&[
        "bench",
        "--n-runs",
        "1",
        "--safe-set",
        reference_set().to_str().unwrap(),
        "--out-dir",
        "/dev/null/out",
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("cannot create output directory"),
        "stderr: {stderr}"
    );
}
