use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pq_spectra_cli::report::{fmt_num, prepare_dir, CSV_HEADER};
use pq_spectra_cli::{parse_config_str, run_sweep, Status};

fn config(p: f64, q: f64, grid: &str, extra: &str) -> String {
    format!(
        "[problem]\ndomain = \"interval\"\nbounds = [0.0, 1.0]\nresolution = [64]\np = {p:?}\nq = {q:?}\n\n[lambda_grid]\n{grid}\n{extra}"
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn pq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pq-spectra")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_csv_summary_and_eigenfunctions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(1.5, 3.0, "multipliers = [0.0, 0.5, 1.0, 1.5, 3.0]", ""));
    let out = dir.path().join("out");
    let o = pq(&["run", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(!csv.contains('\r'));
    let statuses: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(statuses, ["eigenvalue_zero", "no_solution", "boundary_excluded", "eigenpair", "eigenpair"]);
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 10);
    }

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let lambda1 = summary["lambda1"].as_f64().unwrap();
    let lambda_1q = summary["lambda_1q"].as_f64().unwrap();
    assert!((lambda1 - lambda_1q).abs() <= 1e-6 * lambda1);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["consistency"]["passed"], true);

    for k in [0, 3, 4] {
        let dat = fs::read_to_string(out.join(format!("eigenfunction_{k}.dat"))).unwrap();
        assert_eq!(dat.lines().count(), 65);
        assert!(dat.lines().all(|l| l.split_whitespace().count() == 2));
    }
    assert!(!out.join("eigenfunction_1.dat").exists());

    // the written eigenfunction verifies at its own lambda and fails elsewhere
    let lambda = lines[4].split(',').next().unwrap();
    let field = out.join("eigenfunction_3.dat");
    let ok = pq(&["verify", s(&cfg), s(&field), lambda]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let wrong = format!("{}", 1.2 * lambda.parse::<f64>().unwrap());
    assert_eq!(pq(&["verify", s(&cfg), s(&field), &wrong]).status.code(), Some(1));
}

#[test]
fn invalid_hypotheses_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(3.0, 3.0, "", ""));
    let o = pq(&["run", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("H_pq"));

    let table = vec!["1.0"; 64].join(", ");
    let text = config(1.5, 3.0, "", "").replace(
        "q = 3.0\n",
        &format!("q = 3.0\nweight_a = {{ kind = \"table\", values = [{table}, -0.5] }}\n"),
    );
    let cfg = write_config(dir.path(), &text);
    let o = pq(&["lambda1", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("H_ab"));

    let cfg = write_config(dir.path(), "[problem]\ndomain = 3\n");
    assert_eq!(pq(&["run", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn threshold_nonconvergence_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(4.0, 3.0, "", "[solver]\nmax_iters = 1\nnewton_iters = 0\nrestarts = 1\n"),
    );
    let o = pq(&["run", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn output_directory_rules() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(1.5, 3.0, "", ""));
    let fresh = dir.path().join("fresh");
    assert!(pq(&["lambda1", s(&cfg), "--out", s(&fresh)]).status.success());
    assert!(fresh.join("threshold.json").is_file());
    assert!(fresh.join("minimizer.dat").is_file());

    let deep = dir.path().join("missing").join("deeper");
    let o = pq(&["run", s(&cfg), "--out", s(&deep)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("deeper"));
    assert!(!deep.exists());

    assert!(prepare_dir(&fresh).is_ok());
    assert!(prepare_dir(&deep).is_err());
}

#[test]
fn same_seed_is_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(4.0, 3.0, "multipliers = [0.5, 1.0, 2.0, 3.0, 5.0]", ""));
    let read = |workers: &str, name: &str| {
        let out = dir.path().join(format!("w{workers}"));
        assert!(pq(&["run", s(&cfg), "--workers", workers, "--seed", "5", "--out", s(&out)]).status.success());
        (fs::read(out.join("sweep.csv")).unwrap(), fs::read(out.join(name)).unwrap())
    };
    let one = read("1", "summary.json");
    let three = read("3", "summary.json");
    assert_eq!(one, three);
}

#[test]
fn empty_grid_reports_threshold_only() {
    let plan = parse_config_str(&config(1.5, 3.0, "", "")).unwrap();
    let report = run_sweep(&plan).unwrap();
    assert!(report.rows.is_empty());
    assert!(report.threshold.lambda1 > 0.0);
    assert_eq!(pq_spectra_cli::report::sweep_csv(&report), format!("{CSV_HEADER}\n"));
}

#[test]
fn coercive_row_has_negative_energy() {
    let plan = parse_config_str(&config(4.0, 3.0, "multipliers = [2.0]", "")).unwrap();
    let report = run_sweep(&plan).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(row.status, Status::Eigenpair);
    assert_eq!(row.case_tag.unwrap().label(), "coercive");
    assert!(row.j_value.unwrap() < 0.0);
    assert!(report.consistency.as_ref().unwrap().lower_bound == Some(true));
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_num(-2.0), "-2.0000000000000000e0");
    let x = 1.0 / 3.0;
    assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
}
