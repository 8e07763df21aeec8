//! End-to-end tests of the binary: determinism of emitted files, worker-count
//! independence, self-describing headers, schemas, and error reporting.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_defectline"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const CONN_CFG: &str = "model.d = 2\nmodel.p = 0.4\nmodel.p_line = 0.8\n\
    geometry.n = 3,5\ngeometry.half_width = 2\nrun.replicas = 20000\nrun.seed = 42\n";

#[test]
fn connectivity_is_deterministic_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "conn.cfg", CONN_CFG);
    let cfg = cfg.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    run_ok(&["connectivity", "--config", cfg, "--out", out_a.to_str().unwrap()]);
    run_ok(&["connectivity", "--config", cfg, "--out", out_b.to_str().unwrap()]);
    run_ok(&[
        "connectivity",
        "--config",
        cfg,
        "--out",
        out_c.to_str().unwrap(),
        "--workers",
        "3",
    ]);
    let a = std::fs::read(out_a.join("connectivity.csv")).unwrap();
    let b = std::fs::read(out_b.join("connectivity.csv")).unwrap();
    let c = std::fs::read(out_c.join("connectivity.csv")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical files");
    assert_eq!(a, c, "worker count must not change a single byte");
}

#[test]
fn seed_flag_changes_output_and_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "conn.cfg", CONN_CFG);
    let cfg = cfg.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(&["connectivity", "--config", cfg, "--out", out_a.to_str().unwrap()]);
    run_ok(&[
        "connectivity",
        "--config",
        cfg,
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "43",
    ]);
    let a = std::fs::read_to_string(out_a.join("connectivity.csv")).unwrap();
    let b = std::fs::read_to_string(out_b.join("connectivity.csv")).unwrap();
    assert_ne!(a, b);
    assert!(b.lines().next().unwrap().contains("\"seed\":43"));
}

#[test]
fn output_header_is_json_with_config_hash_and_rows_match_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "conn.cfg", CONN_CFG);
    let out = dir.path().join("out");
    run_ok(&[
        "connectivity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("connectivity.csv")).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["artifact"], "defectline");
    assert_eq!(header["config"]["model"]["p"], 0.4);
    assert_eq!(header["config_hash"].as_str().unwrap().len(), 16);
    assert_eq!(
        lines.next().unwrap(),
        "p,p_line,n,replicas,hits,phat,stderr,seed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2, "one row per (p, p_line, n)");
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8);
        let phat: f64 = cols[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&phat));
        assert!(!row.contains(' '), "no locale formatting: {row}");
    }
}

#[test]
fn grid_expansion_produces_ten_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.cfg",
        "model.d = 2\nmodel.p = 0.4\nmodel.p_line_grid = 0.5:0.95:0.05\n\
         geometry.n = 3\ngeometry.half_width = 2\nrun.replicas = 500\nrun.seed = 7\n",
    );
    let out = dir.path().join("out");
    run_ok(&[
        "connectivity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("connectivity.csv")).unwrap();
    // Header JSON + CSV header + 10 grid points x 1 length.
    assert_eq!(text.lines().count(), 12);
    let p_lines: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|row| row.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(p_lines.first(), Some(&"0.5"));
    assert_eq!(p_lines.last(), Some(&"0.95"));
}

#[test]
fn xi_scan_emits_summary_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scan.cfg",
        "model.d = 2\nmodel.p = 0.3\nmodel.p_line_grid = 0.5,0.9\n\
         geometry.n = 4,6,8,10\ngeometry.half_width = 3\nrun.replicas = 20000\nrun.seed = 9\n",
    );
    let out = dir.path().join("out");
    run_ok(&[
        "xi-scan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("xi_scan.csv")).unwrap();
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "p_line,xi_hat,xi_se,kappa_hat,kappa_se");
    let rows: Vec<Vec<f64>> = lines
        .map(|row| row.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    // Stronger line pins harder: decay rate strictly drops.
    assert!(rows[1][1] < rows[0][1]);
}

#[test]
fn config_errors_exit_2_with_machine_readable_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.cfg",
        "model.d = 2\nmodel.p = 1.5\nmodel.p_line = 0.9\n\
         geometry.n = 3\nrun.replicas = 10\nrun.seed = 1\n",
    );
    let out = bin()
        .args(["connectivity", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("model.p") && msg.contains("line 2"), "{msg}");
}

#[test]
fn unknown_and_duplicate_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (name, extra, needle) in [
        ("unknown.cfg", "model.q = 0.3\n", "unknown key"),
        ("dup.cfg", "model.p = 0.3\n", "duplicate key"),
    ] {
        let cfg = write_config(dir.path(), name, &format!("{CONN_CFG}{extra}"));
        let out = bin()
            .args(["connectivity", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "{stderr}");
        assert!(stderr.contains("line 8"), "{stderr}");
    }
}

#[test]
fn verify_passes_on_clean_build() {
    let out = run_ok(&["verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0 failures"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("ok")).count() >= 20);
}

#[test]
fn pinning_csv_matches_closed_form_and_probe_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pin.cfg",
        "pinning.d = 1\npinning.eps = 0,1\npinning.nmax = 20000\n\
         probe.delta = 0.2\nprobe.n = 64\nprobe.replicas = 40000\nrun.seed = 5\n",
    );
    let out = dir.path().join("out");
    run_ok(&[
        "pinning",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let pinning = std::fs::read_to_string(out.join("pinning.csv")).unwrap();
    let mut lines = pinning.lines().skip(1);
    assert_eq!(
        lines.next().unwrap(),
        "eps,f_value,bracket_lo,bracket_hi,nmax,tail_err"
    );
    let rows: Vec<Vec<&str>> = lines.map(|row| row.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let f0: f64 = rows[0][1].parse().unwrap();
    assert_eq!(f0, 0.0, "recurrent walk pins only at positive strength");
    let f1: f64 = rows[1][1].parse().unwrap();
    let closed = -0.5 * (2.0 * (-1.0f64).exp() - (-2.0f64).exp()).ln();
    assert!((f1 - closed).abs() <= 1e-10);

    let probe = std::fs::read_to_string(out.join("probe.csv")).unwrap();
    let mut lines = probe.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "delta,N,phat,stderr,rate");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let phat: f64 = row[2].parse().unwrap();
    assert!(phat > 0.0 && phat < 1.0);
}

#[test]
fn geometry_emits_valid_json_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geo.cfg",
        "model.d = 2\nmodel.p = 0.3\nmodel.p_line = 0.9\ngeometry.n = 8\n\
         geometry.half_width = 4\nrun.samples = 6\nrun.seed = 3\n",
    );
    let out = dir.path().join("out");
    run_ok(&[
        "geometry",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("geometry.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 6, "header plus one record per sample");
    for record in &lines[1..] {
        let v: serde_json::Value = serde_json::from_str(record).unwrap();
        assert_eq!(v["n"], 8);
        // Conditioned clusters span the whole box.
        assert_eq!(v["cluster"]["min_x"], 0);
        assert_eq!(v["cluster"]["max_x"], 8);
        assert!(v["renewals"].is_array());
        assert!(v["line_stats"]["interaction"].is_number());
    }
}

#[test]
fn renewal_demo_reports_exact_geometric_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ren.cfg",
        "renewal.kernel = geometric\nrenewal.horizon = 2000\nrun.seed = 1\n",
    );
    let out = dir.path().join("out");
    run_ok(&[
        "renewal-demo",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("renewal_demo.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "geometric");
    assert_eq!(row[2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.5);
    assert!(row[5].parse::<f64>().unwrap() <= 1e-13);
}
