use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sveb::sim::fmt_num;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scenario1.csv")
}

fn sveb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sveb")).args(args).output().expect("binary runs")
}

fn error_report(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn run_fixture(dir: &Path) -> Output {
    sveb(&[
        "run", "-i", fixture().to_str().unwrap(), "-f", "poisson_gamma", "-o", dir.to_str().unwrap(), "-B", "20",
        "--seed", "3", "--no-standardize",
    ])
}

#[test]
fn run_is_byte_identical_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_fixture(&a).status.success());
    assert!(run_fixture(&b).status.success());
    let fa = files(&a);
    assert_eq!(
        fa.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(),
        ["bandwidth.csv", "estimates.csv", "manifest.json", "predictions.csv"]
    );
    assert_eq!(fa, files(&b));

    let again = tmp.path().join("again");
    let out = sveb(&["replay", a.join("manifest.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fa, files(&again));
}

#[test]
fn estimates_round_trip_through_text() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_fixture(tmp.path()).status.success());
    let mut reader = csv::Reader::from_path(tmp.path().join("estimates.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let mut numeric = 0;
    for row in reader.records() {
        let row = row.unwrap();
        for (h, cell) in headers.iter().zip(row.iter()) {
            if cell.contains('e') {
                let v: f64 = cell.parse().unwrap_or_else(|_| panic!("{h}: {cell}"));
                assert_eq!(fmt_num(v), cell, "column {h}");
                numeric += 1;
            }
        }
    }
    assert!(numeric > 400);
}

#[test]
fn integrality_violation_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[1] = "0.175".into();
    lines[3] = cells.join(",");
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = sveb(&["fit", "-i", bad.to_str().unwrap(), "-f", "poisson_gamma", "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let report = error_report(&out);
    assert_eq!(report["kind"], "validation");
    assert_eq!(report["line"], 4);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let missing = sveb(&["fit", "-i", "/nonexistent/data.csv", "-f", "gaussian", "-o", dir]);
    assert_eq!(missing.status.code(), Some(4));
    assert_eq!(error_report(&missing)["kind"], "io");

    let fx = fixture();
    let fx = fx.to_str().unwrap();
    let clash = sveb(&["fit", "-i", fx, "-f", "poisson_gamma", "-o", dir, "-b", "0.5", "--hi", "2"]);
    assert_eq!(clash.status.code(), Some(2));

    let no_weights = sveb(&["benchmark", "-i", fx, "-f", "poisson_gamma", "-o", dir, "--weights", "none"]);
    assert_eq!(no_weights.status.code(), Some(2));

    let tiny = sveb(&["fit", "-i", fx, "-f", "poisson_gamma", "-o", dir, "-b", "0.001", "--no-standardize"]);
    assert_eq!(tiny.status.code(), Some(3), "every local fit fails at a vanishing bandwidth");
    assert_eq!(error_report(&tiny)["kind"], "numerical");
}

#[test]
fn fixed_bandwidth_fit_emits_parameter_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("areas.csv");
    let out = sveb(&["generate", "--family", "poisson_gamma", "--m", "56", "--seed", "11", "-o", data.to_str().unwrap()]);
    assert!(out.status.success());
    let dir = tmp.path().join("fit");
    let out = sveb(&["fit", "-i", data.to_str().unwrap(), "-f", "poisson_gamma", "-b", "0.9", "-o", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.join("estimates.csv")).unwrap();
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    for col in ["nu", "beta1", "beta2"] {
        assert!(headers.iter().any(|h| h == col), "missing {col}");
    }
    assert_eq!(reader.records().count(), 56);
    let bw = std::fs::read_to_string(dir.join("bandwidth.csv")).unwrap();
    assert!(bw.lines().nth(1).unwrap().starts_with("1,9.00000000000e-1,"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    let out_dir = tmp.path().join("out");
    std::fs::write(
        &conf,
        format!(
            "# fixture run\nfamily = poisson_gamma\ninput = {}\nbandwidth = 0.7\nstandardize = false\nout = {}\n",
            fixture().display(),
            out_dir.display()
        ),
    )
    .unwrap();
    let out = sveb(&["fit", "-c", conf.to_str().unwrap(), "-b", "0.8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["bandwidth"], "0.8");
    assert_eq!(manifest["config"]["standardize"], "false");
}

#[test]
fn cv_curve_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sveb(&[
        "cv-curve", "-i", fixture().to_str().unwrap(), "-f", "poisson_gamma", "-o", tmp.path().to_str().unwrap(),
        "--points", "7", "--lo", "0.3", "--hi", "1.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(tmp.path().join("cv_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 8);
    assert!(curve.lines().nth(1).unwrap().starts_with("1,3.00000000000e-1,"));
}

#[test]
fn simulate_table1_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sveb(&[
        "simulate", "--preset", "table1", "--m", "10", "-R", "2", "-S", "2", "-B", "3", "-o",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("table1.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "family,group,n,rb_hybrid,cv_hybrid,rb_naive,cv_naive");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].starts_with("poisson_gamma,1,1.00000000000e1,"));
    assert!(lines[10].starts_with("binomial_beta,5,3.00000000000e1,"));
}
