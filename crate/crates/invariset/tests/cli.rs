use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use invariset::commands::{format_decimal, EXIT_BUDGET, EXIT_INVALID};
use invariset::DescriptionFile;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn invariset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invariset")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn compute(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name.replace(".json", ".desc.json"));
    let o = invariset(&["compute", fixture(name).to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn compute_reports_k_star() {
    let dir = tempfile::tempdir().unwrap();
    for (name, k) in [("circle.json", 3), ("wiener.json", 5)] {
        let d = DescriptionFile::load(&compute(dir.path(), name)).unwrap();
        assert_eq!(d.k_star, k, "{name}");
    }
    let wiener = DescriptionFile::load(&dir.path().join("wiener.desc.json")).unwrap();
    assert!(matches!(wiener.coordinates, invariset::format::CoordinatesEntry::Lift { n: 2, dbar: 2 }));
}

#[test]
fn compute_without_out_prints_json() {
    let o = invariset(&["compute", fixture("circle.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(DescriptionFile::from_json(&stdout(&o)).unwrap().k_star, 3);
}

#[test]
fn exit_codes() {
    let o = invariset(&["compute", fixture("unstable.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Schur"));
    let o = invariset(&["compute", fixture("omega2.json").to_str().unwrap(), "--k-max", "2"]);
    assert_eq!(o.status.code(), Some(EXIT_BUDGET));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"system": {"modes": [[[0.5]]]}, "quadratic": [], "extra": 1}"#).unwrap();
    assert_eq!(invariset(&["compute", bad.to_str().unwrap()]).status.code(), Some(EXIT_INVALID));
    std::fs::write(&bad, r#"{"system": {"modes": [[[0.5, 0], [0, 0.5]]]}, "quadratic": [{"Q": [[1]], "q": [0, 0]}]}"#)
        .unwrap();
    assert_eq!(invariset(&["compute", bad.to_str().unwrap()]).status.code(), Some(EXIT_INVALID));
    std::fs::write(&bad, "{").unwrap();
    assert_eq!(invariset(&["compute", bad.to_str().unwrap()]).status.code(), Some(EXIT_INVALID));
}

#[test]
fn check_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let d = compute(dir.path(), "omega2.json");
    let check = |p: &str| {
        let o = invariset(&["check", d.to_str().unwrap(), p]);
        assert!(o.status.success());
        stdout(&o).trim().to_string()
    };
    assert_eq!(check("0,0"), "inside");
    assert_eq!(check("5,5"), "outside");
    assert_eq!(check("-0.5,0"), "outside");
}

#[test]
fn wiener_trajectory_stays_inside() {
    let dir = tempfile::tempdir().unwrap();
    let d = compute(dir.path(), "wiener.json");
    let desc = DescriptionFile::load(&d).unwrap().to_description().unwrap();
    let mut x = vec![0.3, -0.2];
    for _ in 0..100 {
        let p = format!("{},{}", x[0], x[1]);
        let o = invariset(&["check", d.to_str().unwrap(), &p]);
        assert_eq!(stdout(&o).trim(), "inside", "at {p}");
        x = desc.source.system.step(0, &x).unwrap();
    }
}

#[test]
fn scan_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = compute(dir.path(), "omega2.json");
    let csv = dir.path().join("scan.csv");
    let run = |bounds: &str, res: &str| {
        let o = invariset(&["scan", d.to_str().unwrap(), "--box", bounds, "--resolution", res, "--out", csv.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(&csv).unwrap()
    };
    let degenerate = run("0.1,0.1,-0.2,-0.2", "3");
    let lines: Vec<&str> = degenerate.lines().collect();
    assert_eq!(lines[0], "x1,x2,member");
    assert_eq!(lines.len(), 10);
    assert!(lines[1..].iter().all(|l| *l == "0.1,-0.2,1"));

    let first = run("-1,1,-1,1", "41");
    assert!(!first.contains('\r'));
    assert_eq!(first, run("-1,1,-1,1", "41"));
    let member = |x: &str, y: &str| {
        first.lines().find(|l| l.starts_with(&format!("{x},{y},"))).map(|l| l.ends_with(",1")).unwrap()
    };
    assert!(member("0", "0"));
    assert!(!member("-0.5", "0"));
    assert!(!member("0.5", "0"));
}

#[test]
fn bench_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bench.md");
    let run = |count: &str| {
        let o = invariset(&["bench", "2", count, "--seed", "7", "--out", report.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(&report).unwrap()
    };
    let empty = run("0");
    assert!(empty.contains("Instances: 0"));
    let a = run("4");
    assert!(a.contains("Terminated: 4 of 4"));
    assert!(a.contains("Mean N_iter"));
    let b = run("4");
    assert_eq!(a, b);
}

#[test]
fn decimals_have_at_most_twelve_significant_digits() {
    assert_eq!(format_decimal(0.1 + 0.2), "0.3");
    assert_eq!(format_decimal(-1.1), "-1.1");
    assert_eq!(format_decimal(-0.0), "0");
    assert_eq!(format_decimal(1.0 / 3.0), "0.333333333333");
    assert_eq!(format_decimal(123456.7890123456), "123456.789012");
}
