use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_csb-lab");

const IDENTITY: &str = r#"
seed = 3

[model]
name = "identity"

[grid]
start = 0.0
step = 1.0
count = 4

[loss]
alpha = 2.0

[lambda]
percent = 30

[data]
synthetic = "nominal"
noise = 0.01

[[factors]]
name = "x1"
range = [0.0, 3.0]
nominal = 1.0

[fit]
n_starts = 1
"#;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn dengue_config() -> String {
    fs::read_to_string(configs_dir().join("dengue.toml")).unwrap()
}

struct Run {
    code: i32,
    stderr: String,
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Run {
    let o = Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    Run { code: o.status.code().unwrap_or(-1), stderr: String::from_utf8_lossy(&o.stderr).into_owned() }
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn num(rec: &csv::StringRecord, i: usize) -> f64 {
    rec[i].parse().unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn single_start_fit_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", IDENTITY);
    let out = tmp.path().join("fit");
    let r = run("fit", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(read_csv(&out.join("fits.csv")).len(), 1);
    assert!(out.join("nominal.json").exists());
    // one fit cannot give a spread
    assert!(!out.join("median_ci.csv").exists());
}

#[test]
fn missing_range_names_the_factor() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &IDENTITY.replace("range = [0.0, 3.0]\n", ""));
    let r = run("fit", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("x1"), "{}", r.stderr);
}

#[test]
fn unknown_key_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &IDENTITY.replace("[loss]", "[loss]\nbeta = 1"));
    let r = run("oat", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line"), "{}", r.stderr);
}

#[test]
fn nominal_outside_search_box_is_a_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("nominal.json"), r#"{"x1": 7.0}"#).unwrap();
    let text = IDENTITY.replacen("seed = 3", "seed = 3\nnominal_file = \"nominal.json\"", 1);
    let cfg = write_config(tmp.path(), "p.toml", &text);
    let r = run("oat", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn locked_output_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", IDENTITY);
    let out = tmp.path().join("o");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".csb-lab.lock"), "1").unwrap();
    let r = run("oat", &cfg, &out, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("locked"), "{}", r.stderr);
    assert!(!out.join("summary.json").exists());
}

#[test]
fn lock_is_released_after_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", IDENTITY);
    let out = tmp.path().join("o");
    assert_eq!(run("oat", &cfg, &out, &[]).code, 0);
    assert!(!out.join(".csb-lab.lock").exists());
    assert_eq!(run("oat", &cfg, &out, &[]).code, 0);
}

#[test]
fn manifest_replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = IDENTITY.replace("n_starts = 1", "n_starts = 6") + "\n[shrink]\nn = 200\n[sa]\nn = 64\n";
    let cfg = write_config(tmp.path(), "p.toml", &text);
    for cmd in ["fit", "oat", "csb", "ua", "sa", "converge", "csb-study"] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        let extra: &[&str] = if cmd == "csb-study" { &["--repeats", "2"] } else { &[] };
        let r = run(cmd, &cfg, &a, extra);
        assert_eq!(r.code, 0, "{cmd}: {}", r.stderr);
        let r = run(cmd, &a.join("manifest.json"), &b, &[]);
        assert_eq!(r.code, 0, "{cmd} replay: {}", r.stderr);
        assert_eq!(tree(&a), tree(&b), "{cmd}");
    }
}

#[test]
fn seed_flag_changes_stochastic_output() {
    let tmp = tempfile::tempdir().unwrap();
    let text = IDENTITY.to_string() + "\n[shrink]\nn = 200\n";
    let cfg = write_config(tmp.path(), "p.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("ua", &cfg, &a, &["--seed", "1"]).code, 0);
    assert_eq!(run("ua", &cfg, &b, &["--seed", "2"]).code, 0);
    assert_ne!(fs::read(a.join("ua_samples.csv")).unwrap(), fs::read(b.join("ua_samples.csv")).unwrap());
}

#[test]
fn summary_counts_every_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let text = IDENTITY.to_string() + "\n[shrink]\nn = 200\n";
    let cfg = write_config(tmp.path(), "p.toml", &text);
    let out = tmp.path().join("csb");
    assert_eq!(run("csb", &cfg, &out, &[]).code, 0);
    let s = summary(&out);
    let oat: Vec<Value> = serde_json::from_str(&fs::read_to_string(out.join("oat_diagnostics.json")).unwrap()).unwrap();
    let oat_evals: u64 = oat
        .iter()
        .map(|d| d["up"]["evaluations"].as_u64().unwrap() + d["down"]["evaluations"].as_u64().unwrap())
        .sum();
    let shrink = s["result"]["shrink_evals"].as_u64().unwrap();
    // nominal reference + OAT + shrink + certificate
    assert_eq!(s["total_evals"].as_u64().unwrap(), 1 + oat_evals + shrink + 200);
}

#[test]
fn identity_study_bounds_are_sharp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", IDENTITY);
    let out = tmp.path().join("study");
    let r = run("csb-study", &cfg, &out, &["--repeats", "10"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&out.join("study_bounds.csv"));
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let iqr = num(row, 5) - num(row, 3);
        assert!((0.0..=0.05).contains(&iqr), "{row:?}");
    }
    assert_eq!(read_csv(&out.join("study_runs.csv")).len(), 10);
}

#[test]
fn study_with_two_repeats_gives_valid_quartiles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", IDENTITY);
    let out = tmp.path().join("study");
    assert_eq!(run("csb-study", &cfg, &out, &["--repeats", "2"]).code, 0);
    for row in read_csv(&out.join("study_bounds.csv")) {
        let q: Vec<f64> = (2..7).map(|i| num(&row, i)).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
    }
}

#[test]
fn study_needs_two_repeats() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", IDENTITY);
    let r = run("csb-study", &cfg, &tmp.path().join("s"), &["--repeats", "1"]);
    assert_eq!(r.code, 2);
}

#[test]
fn imax_exit_still_writes_the_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let text = IDENTITY.to_string() + "\n[shrink]\nn = 100\nimax = 1\ndelta = 1.0\n";
    let cfg = write_config(tmp.path(), "p.toml", &text);
    let out = tmp.path().join("csb");
    let r = run("csb", &cfg, &out, &[]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(out.join("manifest.json").exists());
    assert_eq!(summary(&out)["result"]["termination"], "imax");
}

#[test]
fn dengue_csb_contains_nominal_and_passes_a_fresh_recheck() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dengue.toml", &dengue_config());
    let out = tmp.path().join("csb");
    let r = run("csb", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&out.join("csb.csv"));
    assert_eq!(rows.len(), 9);
    for row in &rows {
        let (lo, hi, nominal) = (num(row, 1), num(row, 2), num(row, 5));
        assert!(lo <= nominal && nominal <= hi, "{row:?}");
    }

    let ua_text = dengue_config().replace("[sa]", &format!("[ua]\nbox_file = {:?}\n\n[sa]", out.join("csb.csv")));
    let ua_cfg = write_config(tmp.path(), "ua.toml", &ua_text);
    let ua_out = tmp.path().join("ua");
    assert_eq!(run("ua", &ua_cfg, &ua_out, &[]).code, 0);
    let frac = summary(&ua_out)["result"]["fraction_below"].as_f64().unwrap();
    assert!(frac >= 0.95, "fraction {frac}");
}

#[test]
fn tight_box_exceeds_less_often_than_estimation_ranges() {
    let tmp = tempfile::tempdir().unwrap();
    let wide = write_config(tmp.path(), "wide.toml", &dengue_config());
    let tight_text = dengue_config().replace(
        "[sa]",
        &format!("[ua]\nbox_file = {:?}\n\n[sa]", configs_dir().join("dengue_tight_box.csv")),
    );
    let tight = write_config(tmp.path(), "tight.toml", &tight_text);
    assert_eq!(run("ua", &wide, &tmp.path().join("w"), &[]).code, 0);
    assert_eq!(run("ua", &tight, &tmp.path().join("t"), &[]).code, 0);
    let f = |d: &str| summary(&tmp.path().join(d))["result"]["fraction_below"].as_f64().unwrap();
    assert!(f("t") > f("w"), "tight {} vs wide {}", f("t"), f("w"));
}

#[test]
fn dengue_fit_recovers_nominal_within_ci() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dengue.toml", &dengue_config());
    let out = tmp.path().join("fit");
    let r = run("fit", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let nominal = [2_110_000.0, 670.0, 281_000.0, 7800.0, 0.064, 0.1665, 0.48, 0.00066, 0.5];
    let rows = read_csv(&out.join("median_ci.csv"));
    let mut misses = Vec::new();
    for (row, truth) in rows.iter().zip(nominal) {
        let (median, lo, hi) = (num(row, 1), num(row, 2), num(row, 3));
        let half = (hi - lo) / 2.0;
        if (median - truth).abs() > half {
            misses.push(format!("{} median {median} truth {truth} half-width {half}", &row[0]));
        }
    }
    assert!(misses.is_empty(), "{misses:#?}");
}

#[test]
fn dengue_study_budget_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dengue.toml", &dengue_config());
    let out = tmp.path().join("study");
    let r = run("csb-study", &cfg, &out, &["--repeats", "10"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for row in read_csv(&out.join("study_runs.csv")) {
        let evals = num(&row, 4);
        assert!((5.0e4..=2.5e5).contains(&evals), "{row:?}");
    }
}
