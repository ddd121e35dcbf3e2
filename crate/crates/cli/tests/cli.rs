use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn csie(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csie"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("CSIE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn converge_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(
        &["converge", "--geometry", "circle:r=0.5", "--n", "32", "--N", "4,8", "--T", "0.3"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("converge.csv"));
    assert_eq!(table[0], ["N", "dt", "iters_avg", "iters_min", "iters_max", "error", "ratio"]);
    assert_eq!(table.len(), 3);
    assert_eq!(table[1][0], "4");
    assert_eq!(table[1][1], "7.4999999999999997e-02");
    assert_eq!(table[1][6], "nan");
    let err: f64 = table[2][5].parse().unwrap();
    assert!(err.is_finite() && err > 0.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("converge.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "converge");
    assert_eq!(manifest["config"]["scheme"], "fi");
    assert_eq!(manifest["config"]["args"]["n"], 32);
    assert!(manifest["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert!(manifest["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn zero_data_single_step_reports_nan() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(
        &["converge", "--geometry", "circle:r=0.5", "--n", "32", "--N", "1", "--T", "0.1", "--zero-data"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("converge.csv"));
    assert_eq!(table[1][5], "nan");
}

#[test]
fn failed_check_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(
        &["converge", "--geometry", "circle:r=0.5", "--n", "32", "--N", "1,2", "--T", "0.1", "--zero-data", "--check"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["converge", "--geometry", "hexagon"],
        &["converge", "--scheme", "rk:k=4"],
        &["converge", "--scheme", "pc:k=5"],
        &["converge", "--n", "2048"],
        &["converge", "--N", "2500"],
        &["sdc", "--scheme", "sdc:k=5,sweeps=1", "--N", "401"],
        &["sdc", "--scheme", "sdc:k=6,sweeps=1", "--N", "2"],
        &["spectrum", "--geometry", "ellipse", "--n", "32"],
        &["condition", "--geometry", "star", "--n", "32"],
    ];
    for args in cases {
        let out = csie(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn sdc_stage_limit_message_mentions_degree() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(&["sdc", "--scheme", "sdc:k=6,sweeps=1", "--N", "2"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("degree"));
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(
        &["converge", "--geometry", "circle:r=0.5", "--n", "32", "--N", "2", "--T", "0.5", "--gmres-maxit", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn spectrum_is_deterministic_and_excludes_null_eigenvalue() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--geometry", "circle:r=0.6", "--n", "32", "--dt", "0.05", "--check"];
    for dir in [&a, &b] {
        let out = csie(&args, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let first = fs::read(a.path().join("spectrum.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("spectrum.csv")).unwrap());
    let table = rows(&a.path().join("spectrum.csv"));
    assert_eq!(table.len(), 1 + 2 * 32 - 1);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("spectrum_summary.json")).unwrap()).unwrap();
    assert!(summary["excluded_magnitude"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn condition_rows_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(&["condition", "--n", "32", "--dt", "0.01,0.1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("condition.csv")).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# slope="));
    let table = rows(&dir.path().join("condition.csv"));
    assert_eq!(table.len(), 3);
    for row in &table[1..] {
        let kappa: f64 = row[1].parse().unwrap();
        assert!(kappa.is_finite() && kappa > 0.0);
    }

    let single = tempfile::tempdir().unwrap();
    let out = csie(&["condition", "--n", "32", "--dt", "0.05"], single.path());
    assert!(out.status.success());
    let text = fs::read_to_string(single.path().join("condition.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn sdc_without_sweeps_matches_pc2_on_the_stage_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = csie(
        &["sdc", "--geometry", "circle:r=0.5", "--n", "32", "--scheme", "sdc:k=1,sweeps=0", "--N", "4", "--T", "0.4"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sdc = rows(&dir.path().join("sdc.csv"));
    assert_eq!(sdc[0], ["intervals", "Nk", "dt_over_k", "sweeps", "iters_avg", "error", "ratio"]);

    let pc = tempfile::tempdir().unwrap();
    let out = csie(
        &["converge", "--geometry", "circle:r=0.5", "--n", "32", "--scheme", "pc:k=2", "--N", "4", "--T", "0.4"],
        pc.path(),
    );
    assert!(out.status.success());
    let conv = rows(&pc.path().join("converge.csv"));
    let e_sdc: f64 = sdc[1][5].parse().unwrap();
    let e_pc: f64 = conv[1][5].parse().unwrap();
    assert!((e_sdc - e_pc).abs() <= 1e-9 * e_pc, "{e_sdc} vs {e_pc}");
}
