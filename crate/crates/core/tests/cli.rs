use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qreg")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn simulated(dir: &Path) -> String {
    let data = dir.join("sim.csv");
    let out = qreg(&[
        "simulate",
        "--n",
        "300",
        "--beta",
        "1,2",
        "--gamma",
        "1,0.5",
        "--seed",
        "9",
        "-o",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_fit_succeeds() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path());
    let out = qreg(&["fit", "--data", &data, "--response", "y", "--regressors", "x1", "--taus", "0.25,0.75"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("x1"));
    assert!(text.contains("0.25"));
    assert!(stderr(&out).contains("estimation sample: 300 rows"));
}

#[test]
fn simulate_writes_truth_table() {
    let dir = TempDir::new().unwrap();
    let truth = dir.path().join("truth.csv");
    let out = qreg(&["simulate", "--beta", "1,2", "--gamma", "1,0", "--truth", truth.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(truth).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tau,C,x1"));
    assert_eq!(lines.count(), 9);
    // Simulated data went to stdout.
    assert!(stdout(&out).starts_with("date,y,x1"));
}

#[test]
fn report_verb_reproduces_fit_output() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path());
    let csv_path = dir.path().join("report.csv");
    let base = ["fit", "--data", &data, "--response", "y", "--regressors", "x1", "--taus", "0.1,0.9"];

    let mut args = base.to_vec();
    args.extend(["--format", "csv", "-o", csv_path.to_str().unwrap()]);
    assert_eq!(code(&qreg(&args)), 0);

    let mut args = base.to_vec();
    args.extend(["--format", "markdown"]);
    let direct = qreg(&args);
    assert_eq!(code(&direct), 0);

    let rendered = qreg(&["report", csv_path.to_str().unwrap(), "--format", "markdown"]);
    assert_eq!(code(&rendered), 0, "{}", stderr(&rendered));
    assert_eq!(stdout(&rendered), stdout(&direct));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&qreg(&[])), 1);
    assert_eq!(code(&qreg(&["fit", "--bogus"])), 1);
    assert_eq!(code(&qreg(&["simulate"])), 1);

    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path());
    let bad_tau = qreg(&["fit", "--data", &data, "--response", "y", "--regressors", "x1", "--taus", "1.5"]);
    assert_eq!(code(&bad_tau), 1);
    let no_endog = qreg(&["fit", "--data", &data, "--response", "y", "--regressors", "x1", "--estimators", "2sls"]);
    assert_eq!(code(&no_endog), 1);
}

#[test]
fn help_exits_zero() {
    let out = qreg(&["study", "--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("slope_pairs"));
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = qreg(&["fit", "--data", missing.to_str().unwrap(), "--response", "y", "--regressors", "x1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"));

    let data = simulated(dir.path());
    let out = qreg(&["fit", "--data", &data, "--response", "y", "--regressors", "x9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("x9"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,y,x1\n2020-01-01,1,2\n2020-01-02,abc,3\n").unwrap();
    let out = qreg(&["fit", "--data", bad.to_str().unwrap(), "--response", "y", "--regressors", "x1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
}

#[test]
fn collinear_design_exits_three() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("collinear.csv");
    let mut text = String::from("date,y,a,b\n");
    for i in 0..40 {
        let date = if i < 31 { format!("2020-01-{:02}", i + 1) } else { format!("2020-02-{:02}", i - 30) };
        let a = (i % 7) as f64;
        text.push_str(&format!("{date},{i},{a},{}\n", 2.0 * a));
    }
    fs::write(&path, text).unwrap();
    let out = qreg(&["fit", "--data", path.to_str().unwrap(), "--response", "y", "--regressors", "a,b", "--estimators", "ols"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn study_verb_runs_a_manifest_and_writes_chains() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path());
    let manifest = dir.path().join("small.manifest");
    fs::write(
        &manifest,
        format!(
            "data = {data}\nresponse = y\nregressors = x1\nestimators = ols, bqr\ntaus = 0.5\ndraws = 600\nburn_in = 100\nseed = 3\n"
        ),
    )
    .unwrap();
    let chains = dir.path().join("chains");
    let out = qreg(&["study", manifest.to_str().unwrap(), "--chains-dir", chains.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("section,name,quantile"));
    let files: Vec<_> = fs::read_dir(&chains).unwrap().collect();
    assert_eq!(files.len(), 1);
}
