//! End-to-end checks of the command-line binary: file round trips, exit
//! codes, and determinism under a fixed seed.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn clonephy(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clonephy"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_is_deterministic_and_complete() {
    let dir = tempdir().unwrap();
    let args = [
        "simulate", "--c", "3", "--k", "10", "--samples", "2", "--depth", "100", "--seed", "1",
        "--out", "a",
    ];
    assert_ok(&clonephy(dir.path(), &args));
    let mut again = args;
    again[args.len() - 1] = "b";
    assert_ok(&clonephy(dir.path(), &again));

    let counts_a = std::fs::read_to_string(dir.path().join("a.counts.tsv")).unwrap();
    let counts_b = std::fs::read_to_string(dir.path().join("b.counts.tsv")).unwrap();
    assert_eq!(counts_a, counts_b);
    let truth_a = std::fs::read_to_string(dir.path().join("a.truth.json")).unwrap();
    let truth_b = std::fs::read_to_string(dir.path().join("b.truth.json")).unwrap();
    assert_eq!(truth_a, truth_b);

    // 2 samples x 10 pairs + header.
    assert_eq!(counts_a.lines().filter(|l| !l.starts_with('#')).count(), 21);
}

#[test]
fn missing_required_flag_is_usage_error() {
    let dir = tempdir().unwrap();
    let out = clonephy(dir.path(), &["fit"]);
    assert_eq!(out.status.code(), Some(2));

    let out = clonephy(dir.path(), &["diag", "only-one.csv"]);
    assert_eq!(out.status.code(), Some(2));

    // Invalid configuration values are usage errors too.
    let out = clonephy(
        dir.path(),
        &["simulate", "--c", "1", "--k", "5", "--samples", "1", "--depth", "50"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_counts_is_data_error_with_line_number() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    std::fs::write(
        &path,
        "sample_id\tpair_id\tn00\tn01\tn10\tn11\tnm0\tnm1\tn0m\tn1m\ns1\tp1\t1\t2\t-3\t0\t0\t0\t0\t0\n",
    )
    .unwrap();
    let out = clonephy(dir.path(), &["fit", "--counts", "bad.tsv", "--iterations", "10"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn empty_counts_zero_iterations_gives_empty_report() {
    let dir = tempdir().unwrap();
    std::fs::write(
        dir.path().join("empty.tsv"),
        "sample_id\tpair_id\tn00\tn01\tn10\tn11\tnm0\tnm1\tn0m\tn1m\n",
    )
    .unwrap();
    let out = clonephy(
        dir.path(),
        &["fit", "--counts", "empty.tsv", "--iterations", "0", "--out", "empty"],
    );
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("empty.report.json")).unwrap()).unwrap();
    assert_eq!(report["n_draws"], 0);
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tempdir().unwrap();
    assert_ok(&clonephy(
        dir.path(),
        &[
            "simulate", "--c", "2", "--k", "6", "--samples", "2", "--depth", "150", "--seed", "3",
            "--out", "sim",
        ],
    ));
    let fit_args = [
        "fit", "--counts", "sim.counts.tsv", "--iterations", "400", "--burn-in", "100",
        "--c-max", "3", "--seed", "9", "--out", "run1",
    ];
    assert_ok(&clonephy(dir.path(), &fit_args));
    let mut fit2 = fit_args;
    fit2[fit_args.len() - 1] = "run2";
    assert_ok(&clonephy(dir.path(), &fit2));

    // Identical seed, byte-identical report.
    let r1 = std::fs::read_to_string(dir.path().join("run1.report.json")).unwrap();
    let r2 = std::fs::read_to_string(dir.path().join("run2.report.json")).unwrap();
    assert_eq!(r1, r2);

    // Evaluate against the truth.
    let out = clonephy(
        dir.path(),
        &[
            "evaluate", "--truth", "sim.truth.json", "--report", "run1.report.json", "--out",
            "metrics.csv",
        ],
    );
    assert_ok(&out);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let data_line = metrics.lines().last().unwrap();
    assert_eq!(data_line.split(',').count(), 6);

    // Goodness of fit from the stored draws.
    let out = clonephy(
        dir.path(),
        &["gof", "--counts", "sim.counts.tsv", "--draws", "run1.draws.jsonl", "--out", "gof.csv"],
    );
    assert_ok(&out);
    let gof = std::fs::read_to_string(dir.path().join("gof.csv")).unwrap();
    assert!(gof.starts_with("# exceedance = "));
    // 300 post-burn-in draws, header and comment line.
    assert_eq!(gof.lines().count(), 302);

    // PSRF of a trace against itself is exactly 1.
    let out = clonephy(
        dir.path(),
        &["diag", "run1.trace.csv", "run2.trace.csv"],
    );
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PSRF = 1.0000"), "stdout: {stdout}");
}

#[test]
fn gof_with_empty_draws_is_an_error() {
    let dir = tempdir().unwrap();
    std::fs::write(
        dir.path().join("counts.tsv"),
        "sample_id\tpair_id\tn00\tn01\tn10\tn11\tnm0\tnm1\tn0m\tn1m\ns1\tp1\t5\t1\t0\t0\t1\t1\t2\t0\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("draws.jsonl"), "").unwrap();
    let out = clonephy(
        dir.path(),
        &["gof", "--counts", "counts.tsv", "--draws", "draws.jsonl"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn snv_only_simulation_has_no_complete_reads() {
    let dir = tempdir().unwrap();
    assert_ok(&clonephy(
        dir.path(),
        &[
            "simulate", "--c", "3", "--k", "5", "--samples", "1", "--depth", "80", "--seed", "2",
            "--snv-only", "--out", "snv",
        ],
    ));
    let counts = std::fs::read_to_string(dir.path().join("snv.counts.tsv")).unwrap();
    for line in counts.lines().skip_while(|l| l.starts_with('#')).skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(&fields[2..6], &["0", "0", "0", "0"], "line {line}");
    }
}

#[test]
fn config_file_round_trip_with_flag_override() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "iterations = 50\nburn_in = 10\nc_max = 3\nseed = 5\n").unwrap();
    std::fs::write(
        dir.path().join("counts.tsv"),
        "sample_id\tpair_id\tn00\tn01\tn10\tn11\tnm0\tnm1\tn0m\tn1m\ns1\tp1\t50\t10\t0\t0\t10\t1\t20\t2\n",
    )
    .unwrap();
    let out = clonephy(
        dir.path(),
        &[
            "fit", "--counts", "counts.tsv", "--config", "cfg.toml", "--iterations", "60",
            "--out", "cfgrun",
        ],
    );
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cfgrun.report.json")).unwrap()).unwrap();
    // Flag beats file; file beats default.
    assert_eq!(report["config"]["iterations"], 60);
    assert_eq!(report["config"]["burn_in"], 10);
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["n_draws"], 50);

    // Unknown key in config is a usage error.
    std::fs::write(dir.path().join("bad.toml"), "iterations = 50\nbogus = 1\n").unwrap();
    let out = clonephy(
        dir.path(),
        &["fit", "--counts", "counts.tsv", "--config", "bad.toml"],
    );
    assert_eq!(out.status.code(), Some(2));
}
