use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;

fn mufc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mufc")).args(args).output().expect("mufc runs")
}

fn corpus(file: &str) -> String {
    corpus_dir().join(file).display().to_string()
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../muf/corpus")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn lines(o: &Output) -> Vec<Json> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn check_accepts_kalman() {
    let o = mufc(&["check", &corpus("kalman.muf")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Json = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report.to_string().contains("\"f\""), "{report}");
}

#[test]
fn check_rejects_hold_first() {
    assert_eq!(mufc(&["check", &corpus("kalman_hold_first.muf")]).status.code(), Some(1));
}

#[test]
fn check_reports_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.muf");
    fs::write(&bad, "val main = stream { init = ").unwrap();
    let o = mufc(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.muf"));
    assert_eq!(mufc(&["check", "/nonexistent/x.muf"]).status.code(), Some(2));
}

#[test]
fn run_kalman_one_step() {
    let o = mufc(&["run", &corpus("kalman.muf"), "--particles", "1", "--steps", "1", "--input", "[1.0]"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = lines(&o);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0]["mean"].as_f64(), Some(0.5));
    assert_eq!(out[0]["variance"].as_f64(), Some(0.5));
}

#[test]
fn run_reads_jsonl_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("obs.jsonl");
    fs::write(&input, "true\ntrue\n\nfalse\n").unwrap();
    let o = mufc(&["run", &corpus("coin.muf"), "--particles", "10", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = lines(&o);
    assert_eq!(out.len(), 3);
    assert_eq!(out[2]["mean"].as_f64(), Some(0.6));
}

#[test]
fn run_csv_and_zero_steps() {
    let o = mufc(&["run", &corpus("kalman.muf"), "--particles", "1", "--input", "[1.0, 2.0]", "--format", "csv"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("1,0.5,0.5"), "{text}");
    let o = mufc(&["run", &corpus("kalman.muf"), "--steps", "0", "--input", "[1.0]"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
}

#[test]
fn run_rejects_bad_input() {
    let o = mufc(&["run", &corpus("kalman.muf"), "--input", "[true]"]);
    assert_eq!(o.status.code(), Some(2));
    let o = mufc(&["run", &corpus("kalman.muf"), "--steps", "3", "--input", "[1.0]"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let args = ["run", &corpus("gaussian_random_walk.muf") as &str, "--steps", "5", "--particles", "20", "--seed", "9"];
    assert_eq!(stdout(&mufc(&args)), stdout(&mufc(&args)));
    let env = Command::new(env!("CARGO_BIN_EXE_mufc"))
        .args(&args[..6])
        .env("MUFC_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(stdout(&env), stdout(&mufc(&args)));
}

#[test]
fn trace_prints_metrics() {
    let o = mufc(&["trace", &corpus("kalman.muf"), "--steps", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);

    let o = mufc(&["trace", &corpus("kalman_hold_first.muf"), "--steps", "40", "--particles", "2"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 41);
    let summary = String::from_utf8_lossy(&o.stderr);
    assert!(summary.contains("bounded_k16=false"), "{summary}");

    let o = mufc(&["trace", &corpus("kalman.muf"), "--steps", "5", "--format", "json"]);
    let out = lines(&o);
    assert_eq!(out.len(), 5);
    assert!(out.iter().all(|m| m["reachable"].as_u64().unwrap() <= 2));

    let o = mufc(&["trace", &corpus("kalman.muf"), "--steps", "5", "--particles", "2", "--particle-index", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_matches_bundled_corpus() {
    let o = mufc(&["bench"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("all 9 benchmarks match"));
    assert_eq!(mufc(&["bench", "--corpus", "/nonexistent"]).status.code(), Some(2));
}

#[test]
fn bench_reads_a_corpus_directory() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(corpus_dir()).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let d = dir.path().to_str().unwrap();
    assert_eq!(mufc(&["bench", "--corpus", d]).status.code(), Some(0));

    let kalman = dir.path().join("kalman.muf");
    let src = fs::read_to_string(&kalman).unwrap().replace("let () = observe (gaussian (x, 1.0), obs) in", "");
    fs::write(&kalman, src).unwrap();
    let o = mufc(&["bench", "--corpus", d]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("mismatched: Kalman"), "{}", stdout(&o));
}
