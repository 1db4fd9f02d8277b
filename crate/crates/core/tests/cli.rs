use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, content: &str) -> String {
        std::fs::write(self.path(name), content).unwrap();
        self.arg(name)
    }

    fn report(&self, out: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.path(out).join("report.json")).unwrap()).unwrap()
    }
}

fn flumn(args: &[&str]) -> Output {
    flumn_env(args, &[])
}

fn flumn_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flumn"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const QUICK: &str = r#"{"chain":{"iterations":300,"burn_in":100},"detection":{"warm_burn_in":10,"warm_sweeps":50}}"#;

fn flat_counts(days: usize) -> String {
    let mut s = String::from("region,date,count\n");
    let start = chrono::NaiveDate::from_ymd_opt(2009, 9, 6).unwrap();
    for (region, level) in [("A", 120), ("B", 75), ("C", 300)] {
        for d in 0..days {
            s.push_str(&format!("{region},{},{level}\n", start + chrono::Days::new(d as u64)));
        }
    }
    s
}

fn assert_absent(path: &Path) {
    assert!(!path.exists(), "{} should not exist", path.display());
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(code(&flumn(&["--help"])), 0);
    assert_eq!(code(&flumn(&["--version"])), 0);
    assert_eq!(code(&flumn(&["fit", "--help"])), 0);
    assert_eq!(code(&flumn(&["frobnicate"])), 1);
}

#[test]
fn ingest_errors_are_validation_failures_without_output() {
    let ws = Workspace::new();
    let adjacency = ws.write("adj.csv", "region_a,region_b\nA,B\n");
    let cases = [
        ("gap.csv", "region,date,count\nA,2009-01-01,1\nA,2009-01-02,2\nB,2009-01-01,3\n", "(B, 2009-01-02)"),
        ("neg.csv", "region,date,count\nA,2009-01-01,1\nA,2009-01-02,-3\nB,2009-01-01,1\nB,2009-01-02,1\n", "line 3"),
        ("dup.csv", "region,date,count\nA,2009-01-01,1\nA,2009-01-01,2\nB,2009-01-01,1\n", "duplicate"),
        ("bad.csv", "region,date,count\nA,2009-01-01,many\nB,2009-01-01,1\n", "line 2"),
    ];
    for (name, content, needle) in cases {
        let counts = ws.write(name, content);
        let out = ws.arg(&format!("out-{name}"));
        let run = flumn(&["fit", "--counts", &counts, "--adjacency", &adjacency, "--out", &out]);
        assert_eq!(code(&run), 1, "{name}: {}", stderr(&run));
        assert!(stderr(&run).contains(needle), "{name}: {}", stderr(&run));
        assert_absent(Path::new(&out));
    }
}

#[test]
fn bad_adjacency_rows_are_rejected() {
    let ws = Workspace::new();
    let counts = ws.write("counts.csv", &flat_counts(20));
    for (name, content) in [("self.csv", "region_a,region_b\nA,A\n"), ("unknown.csv", "region_a,region_b\nA,Z\n")] {
        let adjacency = ws.write(name, content);
        let run = flumn(&["fit", "--counts", &counts, "--adjacency", &adjacency, "--out", &ws.arg("out")]);
        assert_eq!(code(&run), 1, "{name}: {}", stderr(&run));
    }
    assert_absent(&ws.path("out"));
}

#[test]
fn missing_inputs_and_bad_settings_are_validation_failures() {
    let ws = Workspace::new();
    let counts = ws.write("counts.csv", &flat_counts(20));
    let out = ws.arg("out");
    assert_eq!(code(&flumn(&["fit", "--counts", &ws.arg("nope.csv"), "--variant", "timehmm", "--out", &out])), 1);
    assert_eq!(code(&flumn(&["fit", "--counts", &counts, "--out", &out])), 1, "spatial fit without borders");
    assert_eq!(code(&flumn(&["fit", "--counts", &counts, "--variant", "bogus", "--out", &out])), 1);
    assert_eq!(code(&flumn(&["fit", "--counts", &counts, "--variant", "timehmm"])), 1, "no --out");
    assert_eq!(code(&flumn(&["detect", "--counts", &counts, "--variant", "average", "--out", &out])), 1);
    let typo = ws.write("typo.json", r#"{"chian":{}}"#);
    assert_eq!(code(&flumn(&["fit", "--counts", &counts, "--config", &typo, "--out", &out])), 1);
    let empty = ws.write("empty.json", r#"{"dic_variants":[]}"#);
    let edgeless = ws.write("edgeless.csv", "");
    let dic = ["dic", "--counts", &counts, "--adjacency", &edgeless, "--config", &empty, "--out", &out];
    assert_eq!(code(&flumn(&dic)), 1);
    let quick = ws.write("quick.json", QUICK);
    let dic = ["dic", "--counts", &counts, "--adjacency", &edgeless, "--config", &quick, "--out", &out];
    assert_eq!(code(&flumn_env(&dic, &[("FLUMN_THREADS", "0")])), 1);
    assert_absent(Path::new(&out));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let ws = Workspace::new();
    let counts = ws.write("counts.csv", &flat_counts(20));
    let quick = ws.write("quick.json", QUICK);
    let blocker = ws.write("file-not-dir", "x");
    let run = flumn(&["fit", "--counts", &counts, "--variant", "timehmm", "--config", &quick, "--out", &blocker]);
    assert_eq!(code(&run), 2, "{}", stderr(&run));
}

#[test]
fn simulated_files_feed_straight_into_fit() {
    let ws = Workspace::new();
    let config = ws.write(
        "config.json",
        r#"{"chain":{"iterations":1500,"burn_in":500},
            "scenario":{"n_regions":3,"n_days":60,"edges":[[0,1],[1,2]],
              "variant":{"spatial":true,"scheme":"Four","daily_effect":true},
              "daily":{"means":[-0.2,0.6,0.1,-0.1,0.0,0.0,-0.3],"variances":[0.01,0.01,0.01,0.01,0.01,0.01,0.01]},
              "transitions":{"temporal":[[3,0,-6,-6],[-6,3,0,-3],[-6,-6,3,0],[0,-6,-6,3]],
                             "spatial":[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
                             "initial":[5,0,0,0]},
              "dynamics":{"drift":[0.3,-0.3],"variance":[0.02,0.02]},
              "initial_counts":[500,500,500],"seed":1}}"#,
    );
    let sim = flumn(&["simulate", "--config", &config, "--seed", "21", "--out", &ws.arg("sim")]);
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    let sim_report = ws.report("sim");
    assert_eq!(sim_report["seed"], 21);
    for f in ["counts.csv", "adjacency.csv", "truth.csv"] {
        assert!(ws.path("sim").join(f).exists(), "{f}");
    }
    let fit = flumn(&[
        "fit",
        "--counts",
        &ws.arg("sim/counts.csv"),
        "--adjacency",
        &ws.arg("sim/adjacency.csv"),
        "--config",
        &config,
        "--out",
        &ws.arg("fit"),
    ]);
    assert_eq!(code(&fit), 0, "{}", stderr(&fit));
    let report = ws.report("fit");
    assert_eq!(report["result"]["days"], 60);
    assert_eq!(report["result"]["edges"], 2);
    assert!(report["inputs"]["counts"].as_str().unwrap().len() == 64);
    let drift = report["result"]["summary"]["drift"].as_array().unwrap();
    assert_eq!(drift.len(), 2);
    for iv in drift {
        let (lo, mean, hi) = (iv["lower"].as_f64().unwrap(), iv["mean"].as_f64().unwrap(), iv["upper"].as_f64().unwrap());
        assert!(lo <= mean && mean <= hi, "{iv}");
    }
    assert!(report["result"]["summary"].get("phase_marginals").is_none());
    let phases = std::fs::read_to_string(ws.path("fit/phases.csv")).unwrap();
    assert!(phases.starts_with("region,date,p_ne,p_re,p_se,p_de,p_epidemic,map_phase\n"));
    assert_eq!(phases.lines().count(), 1 + 3 * 59);
}

#[test]
fn constant_counts_raise_no_alarm() {
    let ws = Workspace::new();
    let counts = ws.write("counts.csv", &flat_counts(40));
    let adjacency = ws.write("adj.csv", "region_a,region_b\nA,B\nB,C\n");
    let run = flumn(&["detect", "--counts", &counts, "--adjacency", &adjacency, "--out", &ws.arg("det")]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = ws.report("det");
    for alarm in report["result"]["alarms"].as_array().unwrap() {
        assert!(alarm["alarm_date"].is_null(), "{alarm}");
    }
    let csv = std::fs::read_to_string(ws.path("det/probabilities.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 39);
}

#[test]
fn average_baseline_needs_only_a_reference() {
    let ws = Workspace::new();
    let counts = ws.write("counts.csv", &flat_counts(20));
    let reference = ws.write("ref.csv", &flat_counts(28));
    let run = flumn(&["detect", "--counts", &counts, "--variant", "average", "--reference", &reference, "--out", &ws.arg("o")]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = ws.report("o");
    assert_eq!(report["variant"], "average");
    assert!(report["inputs"]["reference"].is_string());
    assert!(!ws.path("o/probabilities.csv").exists());
}

#[test]
fn forecast_reports_both_methods() {
    let ws = Workspace::new();
    let quick = ws.write("quick.json", QUICK);
    let sim = flumn(&["simulate", "--config", &quick, "--out", &ws.arg("sim")]);
    assert_eq!(code(&sim), 0);
    let run = flumn(&[
        "forecast",
        "--counts",
        &ws.arg("sim/counts.csv"),
        "--variant",
        "timehmm",
        "--config",
        &quick,
        "--out",
        &ws.arg("fc"),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = ws.report("fc");
    assert_eq!(report["result"]["first_origin"], 90);
    let csv = std::fs::read_to_string(ws.path("fc/forecasts.csv")).unwrap();
    // origins 90..=179 for ten regions, the last one past the end of the data
    assert_eq!(csv.lines().count(), 1 + 10 * 90);
    assert!(csv.lines().last().unwrap().split(',').nth(4) == Some(""));
}

#[test]
fn evaluate_joins_on_region_and_date() {
    let ws = Workspace::new();
    let p = ws.write("p.csv", "region,date,value\nB,2009-01-01,4\nA,2009-01-02,2\nA,2009-01-01,1\nB,2009-01-02,3\n");
    let a = ws.write("a.csv", "region,date,truth\nA,2009-01-01,1\nA,2009-01-02,2\nB,2009-01-01,3\nB,2009-01-02,4\n");
    let run = flumn(&["evaluate", "--predicted", &p, "--actual", &a, "--out", &ws.arg("ev")]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let r = ws.report("ev");
    assert_eq!(r["result"]["points"], 4);
    assert!((r["result"]["regions"]["A"]["correlation"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((r["result"]["regions"]["B"]["correlation"].as_f64().unwrap() + 1.0).abs() < 1e-12);
    let short = ws.write("short.csv", "region,date,value\nA,2009-01-01,1\n");
    assert_eq!(code(&flumn(&["evaluate", "--predicted", &p, "--actual", &short, "--out", &ws.arg("x")])), 1);
    assert_absent(&ws.path("x"));
}

#[test]
fn dic_reports_every_variant_whatever_the_thread_cap() {
    let ws = Workspace::new();
    let quick = ws.write("quick.json", QUICK);
    assert_eq!(code(&flumn(&["simulate", "--config", &quick, "--seed", "2", "--out", &ws.arg("sim")])), 0);
    let args = |out: &str| {
        vec![
            "dic".to_string(),
            "--counts".into(),
            ws.arg("sim/counts.csv"),
            "--adjacency".into(),
            ws.arg("sim/adjacency.csv"),
            "--config".into(),
            quick.clone(),
            "--out".into(),
            ws.arg(out),
        ]
    };
    let one: Vec<String> = args("one");
    let two: Vec<String> = args("two");
    assert_eq!(code(&flumn_env(&one.iter().map(String::as_str).collect::<Vec<_>>(), &[("FLUMN_THREADS", "1")])), 0);
    assert_eq!(code(&flumn_env(&two.iter().map(String::as_str).collect::<Vec<_>>(), &[("FLUMN_THREADS", "4")])), 0);
    let (a, b) = (ws.report("one"), ws.report("two"));
    assert_eq!(a, b);
    let names: Vec<&str> = a["result"]["variants"].as_array().unwrap().iter().map(|v| v["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["flumn", "flumn-r", "timehmm", "twophase"]);
}
