//! End-to-end runs of the `dshap` binary.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dshap");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], kind: &str) -> i32 {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    assert!(lines[0].starts_with(&format!("error kind={kind} message=\"")), "{stderr}");
    out.status.code().unwrap()
}

fn regression_file(dir: &Path) -> String {
    let path = dir.join("reg.csv");
    ok(&["gen", "--kind", "gaussian-r", "--rows", "600", "--dim", "3", "--seed", "9", "-o", path.to_str().unwrap()]);
    path.to_str().unwrap().to_string()
}

const SMALL: [&str; 6] = ["--n-value-points", "12", "--n-test", "100", "--n-background", "300"];

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let file = regression_file(dir.path());
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd, "--input", file.as_str()];
        args.extend(SMALL);
        args.extend(extra);
        ok(&args)
    };
    assert_eq!(with("value", &[]).lines().filter(|l| !l.starts_with('#')).count(), 13);
    let class = dir.path().join("class.csv");
    ok(&["gen", "--kind", "gaussian-c", "--rows", "600", "-o", class.to_str().unwrap()]);
    let mut bounds = vec!["bounds", "--input", class.to_str().unwrap(), "--task", "classification"];
    bounds.extend(SMALL);
    assert!(ok(&bounds).contains("skipped_terms"));
    assert!(with("baseline", &["--baseline-draws", "20"]).contains(",baseline,"));
    assert!(with("point-addition", &["--repetitions", "2"]).contains("largest,12,"));
    ok(&["value", "--synthetic", "normal", "--dim", "1", "--rows", "400", "--task", "density",
        "--n-value-points", "5", "--bandwidth", "0.3", "--mc-budget", "200"]);
    ok(&["time-bench", "--cells", "20x2", "--repetitions", "1", "--baseline-draws", "5", "--baseline-points", "1", "--n-test", "50"]);
    let scan = ok(&["synergy-scan", "--grid", "0.1,0.2", "--m", "20", "--draws", "200"]);
    assert!(scan.contains("h,threshold,probability"));
    let json = ok(&["value", "--input", &file, "--n-value-points", "3", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    dshap_bench::output::validate_json(&doc).unwrap();
    ok(&["--help"]);
    ok(&["--version"]);
}

#[test]
fn failures_report_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = regression_file(dir.path());
    assert_eq!(fails(&["value", "--no-such-flag"], "usage"), 2);
    assert_eq!(fails(&["value", "--input", "/definitely/missing.csv"], "io"), 1);
    fails(&["value", "--input", &file, "--target", "nope"], "config");
    fails(&["value", "--input", &file, "--n-value-points", "100000"], "config");
    fails(&["bounds", "--input", &file, "--task", "density"], "config");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,inf\n").unwrap();
    fails(&["value", "--input", bad.to_str().unwrap()], "non_finite");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    fails(&["value", "--input", &file, "--config", cfg.to_str().unwrap()], "config");
}

#[test]
fn outputs_are_reproducible_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let file = regression_file(dir.path());
    let outputs: Vec<(String, String)> = ["1", "1", "4"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let curve = dir.path().join(format!("curve{i}.csv"));
            let values = dir.path().join(format!("values{i}.csv"));
            let mut args = vec!["point-addition", "--input", file.as_str(), "--repetitions", "3", "--threads", threads];
            args.extend(SMALL);
            args.extend(["-o", curve.to_str().unwrap(), "--values-output", values.to_str().unwrap()]);
            ok(&args);
            let mut value_args = vec!["value", "--input", file.as_str(), "--threads", threads];
            value_args.extend(SMALL);
            let direct = ok(&value_args);
            (
                std::fs::read_to_string(curve).unwrap() + &std::fs::read_to_string(values).unwrap(),
                direct,
            )
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    let strip = |s: &str| s.lines().filter(|l| !l.contains("threads")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&outputs[0].0), strip(&outputs[2].0));
    assert_eq!(strip(&outputs[0].1), strip(&outputs[2].1));
}
