use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bounds_ci::io::bundled_table2;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bounds-ci"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

/// Parses a CSV with a header into rows of string cells.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn crit_solves_and_shortcuts() {
    let out = run(&["crit", "--rho", "0.95", "--alpha", "0.05"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let c: f64 = field(&text, "c_hat").parse().unwrap();
    assert!((c - 1.70).abs() <= 0.01, "{text}");
    assert_eq!(field(&text, "method"), "solved");

    let text = stdout(&run(&[
        "crit",
        "--rho",
        "0",
        "--alpha",
        "0.05",
        "--rho-known-zero",
    ]));
    assert!((field(&text, "c_hat").parse::<f64>().unwrap() - 1.6449).abs() < 1e-4);
    assert_eq!(field(&text, "method"), "shortcut_one_sided");
    assert_eq!(field(&text, "argmin_delta"), "+inf");

    let text = stdout(&run(&[
        "crit",
        "--rho",
        "0",
        "--alpha",
        "0.2",
        "--rho-known-zero",
    ]));
    assert_eq!(field(&text, "method"), "solved");
}

#[test]
fn crit_json_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("profile.csv");
    let out = run(&[
        "crit",
        "--rho",
        "-0.5",
        "--format",
        "json",
        "--profile-out",
        profile.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(json["c_hat"].as_f64().unwrap() > 1.64);
    let rows = csv_rows(&fs::read_to_string(&profile).unwrap());
    assert_eq!(rows.len(), 4001);
}

#[test]
fn usage_and_computation_exit_codes() {
    assert_eq!(
        run(&["crit", "--alpha", "x", "--rho", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["crit"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let out = run(&["crit", "--rho", "0", "--alpha", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unsupported significance level"));
    assert_eq!(run(&["crit", "--rho", "1.5"]).status.code(), Some(1));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ci_trivial_row_and_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "good.csv",
        "label,theta_L,theta_U,se_L,se_U,rho,alpha,rho_known_zero\ntrivial,0,0,1,1,0,.05,1\n",
    );
    let out = run(&["ci", &good]);
    assert!(out.status.success());
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    let lo: f64 = rows[0][3].parse().unwrap();
    let hi: f64 = rows[0][4].parse().unwrap();
    assert!((lo + 1.6449).abs() < 1e-4 && (hi - 1.6449).abs() < 1e-4);
    assert_eq!(rows[0][5], "");

    let bad = write(
        dir.path(),
        "bad.csv",
        "# header follows\nlabel,theta_L,theta_U,se_L,se_U,rho,alpha,rho_known_zero\nok,0,1,1,1,0.2,0.05,0\nzero,0,1,0,1,0,0.05,0\n",
    );
    let out = run(&["ci", &bad, "--with-ti"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("line 4") && err.contains("nonpositive standard error"),
        "{err}"
    );
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert!(!rows[0][5].is_empty());
}

#[test]
fn ci_set_coverage_uses_two_sided_value() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "p.csv",
        "label,theta_L,theta_U,se_L,se_U,rho,alpha,rho_known_zero\na,0,2,1,1,0.3,0.05,0\n",
    );
    let out = run(&["ci", &file, "--set-coverage", "--format", "json"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((json[0]["c_hat"].as_f64().unwrap() - 1.959_964).abs() < 1e-5);
    assert_eq!(json[0]["mode"], "set_coverage");
}

#[test]
fn table1_cells_and_layout() {
    let out = run(&[
        "table1", "--alphas", "0.05", "--rhos", "1.0", "--format", "csv",
    ]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], "1.96");

    let text = stdout(&run(&["table1", "--format", "text"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("rho"));
    assert!(lines[1].starts_with("alpha=0.1"));
    assert_eq!(lines[2].split_whitespace().count(), 8);
    assert!(lines[3].trim_end().ends_with("2.58"));
}

#[test]
fn simulate_floor_and_determinism() {
    let args = [
        "simulate", "--rho", "0", "--alpha", "0.05", "--reps", "100000", "--seed", "7",
    ];
    let a = run(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = run(&[&args[..], &["--workers", "3"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let rows = csv_rows(&stdout(&a));
    assert_eq!(rows.len(), 57 * 3);
    for row in rows.iter().filter(|r| r[1] == "CI_MA") {
        let delta: f64 = row[0].parse().unwrap();
        let cov: f64 = row[2].parse().unwrap();
        if delta >= 0.0 {
            assert!(cov >= 0.948, "{row:?}");
        }
    }
}

#[test]
fn simulate_override_shows_dip() {
    let out = run(&[
        "simulate",
        "--rho",
        "0.95",
        "--c-override",
        "1.6449",
        "--methods",
        "CI_MA",
        "--deltas",
        "0:0.25:3",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dips = csv_rows(&stdout(&out))
        .iter()
        .filter(|r| r[2].parse::<f64>().unwrap() + 3.0 * r[3].parse::<f64>().unwrap() < 0.95)
        .count();
    assert!(dips > 0);
}

#[test]
fn simulate_config_file_writes_one_csv_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("curves");
    let config = write(
        dir.path(),
        "sim.conf",
        &format!(
            "# small sweep\nrho = 0, -0.7\nalpha = 0.05\ndeltas = -1:1:2\nreps = 2000\nseed = 4\nout_dir = {}\n",
            out_dir.display()
        ),
    );
    let out = bin()
        .args(["simulate", "--config", &config])
        .env("BOUNDS_CI_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    for name in [
        "coverage_rho0_alpha0.05.csv",
        "coverage_rho-0.7_alpha0.05.csv",
    ] {
        let rows = csv_rows(&fs::read_to_string(out_dir.join(name)).unwrap());
        assert_eq!(rows.len(), 4 * 3);
    }
    let bad = bin()
        .args(["simulate", "--config", &config])
        .env("BOUNDS_CI_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn backout_then_ci_reproduces_table2() {
    let dir = tempfile::tempdir().unwrap();
    let problems = dir.path().join("table2_problems.csv");
    let out = run(&["backout", "-o", problems.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&["ci", problems.to_str().unwrap(), "--with-ti"]);
    assert!(out.status.success());
    let rows = csv_rows(&stdout(&out));
    let printed = bundled_table2();
    assert_eq!(rows.len(), printed.len());
    for (row, t) in rows.iter().zip(&printed) {
        assert_eq!(row[0], t.game);
        let cell = |i: usize| row[i].parse::<f64>().unwrap();
        assert!(
            (cell(3) - t.ci_ma_lo).abs() <= 0.001 && (cell(4) - t.ci_ma_hi).abs() <= 0.001,
            "{row:?}"
        );
        assert!(
            (cell(5) - t.ci_ti_lo).abs() <= 0.003 && (cell(6) - t.ci_ti_hi).abs() <= 0.003,
            "{row:?}"
        );
    }
}

#[test]
fn backout_flags_infeasible_rows() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "t2.csv",
        "game,theta_l_hat,theta_u_hat,ci_ma_lo,ci_ma_hi,ci_ti_lo,ci_ti_hi,rel_length,inverted,short\n\
         fine,0.499,0.557,0.459,0.597,0.458,0.598,0.97,0,0\n\
         broken,0.499,0.557,0.459,0.5,0.458,0.598,0.97,0,0\n",
    );
    let out = run(&["backout", &file]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("flagged: broken"));
    assert_eq!(csv_rows(&stdout(&out)).len(), 1);
}
