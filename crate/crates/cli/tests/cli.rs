use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chunkblend")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn structured(args: &[&str]) -> Value {
    let mut all = vec!["--format", "structured"];
    all.extend_from_slice(args);
    serde_json::from_str(&ok(&all)).expect("structured output is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Learns the toy corpus into `dir/models.json`.
fn learned(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("models.json");
    ok(&["learn", "--corpus", s(&fixtures().join("toy")), "--out", s(&out)]);
    out
}

#[test]
fn learn_finds_both_level_types() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.json");
    let report = structured(&["learn", "--corpus", s(&fixtures().join("toy")), "--out", s(&out)]);
    assert_eq!(report["categories"].as_array().unwrap().len(), 2);
    let file: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(file["format"], "chunkblend-model");
    assert_eq!(file["run"]["command"], "learn");
    let tags: Vec<&str> = file["lnodes"].as_array().unwrap().iter().map(|l| l["tag"].as_str().unwrap()).collect();
    assert_eq!(tags, ["overworld", "underwater"]);
}

#[test]
fn learn_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = learned(&dir);
    let b = dir.path().join("again.json");
    ok(&["learn", "--corpus", s(&fixtures().join("toy")), "--out", s(&b)]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn learn_on_empty_corpus_fails_without_output() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("empty");
    fs::create_dir_all(corpus.join("levels")).unwrap();
    fs::copy(fixtures().join("toy/legend.txt"), corpus.join("legend.txt")).unwrap();
    let out = dir.path().join("m.json");
    let res = run(&["learn", "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn generate_follows_target_level_sequence() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let mixture = fixtures().join("mixture.txt");
    let report = structured(&["generate", "--model", s(&models), "--target-level", s(&mixture), "--seed", "4"]);
    let seq: Vec<&str> = report["sequence"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(seq.len(), 10);
    assert!(seq.contains(&"0") && seq.contains(&"1"));
    let rows: Vec<&str> = report["level"].as_str().unwrap().lines().collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.chars().count() == 160));
    let again = structured(&["generate", "--model", s(&models), "--target-level", s(&mixture), "--seed", "4"]);
    assert_eq!(report, again);
}

#[test]
fn generate_writes_level_file() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let out = dir.path().join("g.txt");
    ok(&["generate", "--model", s(&models), "--lnodes", "1,0", "--out", s(&out)]);
    let text = fs::read_to_string(out).unwrap();
    assert!(text.ends_with('\n'));
    assert!(text.lines().all(|r| r.chars().count() == 32));
}

#[test]
fn generate_rejects_unknown_lnode() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    assert_eq!(run(&["generate", "--model", s(&models), "--lnodes", "7"]).status.code(), Some(1));
}

#[test]
fn auto_blend_emits_blended_models() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let out = dir.path().join("b.json");
    let mixture = fixtures().join("mixture.txt");
    let report =
        structured(&["blend", "--model", s(&models), "--auto", "--target-level", s(&mixture), "--out", s(&out)]);
    assert!(!report["blended"].as_array().unwrap().is_empty());
    let file: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(file["lnodes"].as_array().unwrap().len() > 2);

    // the blends explain the partially renamed chunks better
    let (sb, sm) = (dir.path().join("sb.json"), dir.path().join("sm.json"));
    ok(&["score", "--model", s(&out), "--level", s(&mixture), "--out", s(&sb)]);
    ok(&["score", "--model", s(&models), "--level", s(&mixture), "--out", s(&sm)]);
    let stats = structured(&["stats", "--test", "mwu", "--a", s(&sb), "--b", s(&sm), "--alternative", "greater"]);
    let p = stats["p"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(stats["statistic"], "U");
}

#[test]
fn pair_and_full_blends() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let mixture = fixtures().join("mixture.txt");
    let out = dir.path().join("p.json");
    let pair = structured(&[
        "blend",
        "--model",
        s(&models),
        "--source",
        "0",
        "--target",
        "1",
        "--target-level",
        s(&mixture),
        "--out",
        s(&out),
    ]);
    assert_eq!(pair["blended"], serde_json::json!(["0+1"]));
    let full = structured(&[
        "blend",
        "--model",
        s(&models),
        "--full",
        "--tags",
        "overworld,underwater",
        "--target-level",
        s(&mixture),
        "--out",
        s(&out),
    ]);
    assert_eq!(full["blended"], serde_json::json!(["0+1", "1+0"]));
    let missing = run(&[
        "blend",
        "--model",
        s(&models),
        "--full",
        "--tags",
        "overworld,lava",
        "--target-level",
        s(&mixture),
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn score_on_training_level_is_positive() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let level = fixtures().join("toy/levels/overworld-1.txt");
    let report = structured(&["score", "--model", s(&models), "--level", s(&level)]);
    let d = &report["distributions"][0];
    assert_eq!(d["scores"].as_array().unwrap().len(), 8);
    assert!(d["median"].as_f64().unwrap() > 0.0);
}

#[test]
fn rank_orders_training_levels_above_mixture() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let levels = fixtures().join("toy/levels");
    let report = structured(&[
        "rank",
        "--model",
        s(&models),
        "--level",
        s(&fixtures().join("mixture.txt")),
        "--level",
        s(&levels.join("overworld-1.txt")),
    ]);
    let order: Vec<&str> =
        report["ranking"].as_array().unwrap().iter().map(|r| r["level_id"].as_str().unwrap()).collect();
    assert_eq!(order, ["overworld-1", "mixture"]);
    assert_eq!(
        run(&["rank", "--model", s(&models), "--level", s(&levels.join("overworld-1.txt"))]).status.code(),
        Some(1)
    );
}

#[test]
fn stats_tests_on_score_files() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let levels = fixtures().join("toy/levels");
    ok(&["score", "--model", s(&models), "--level", s(&levels.join("overworld-1.txt")), "--out", s(&a)]);
    ok(&["score", "--model", s(&models), "--level", s(&levels.join("underwater-1.txt")), "--out", s(&b)]);
    // the renamed level is scored by its own model exactly as the original
    let rho = structured(&["stats", "--test", "spearman", "--a", s(&a), "--b", s(&b)]);
    assert_eq!(rho["value"].as_f64(), Some(1.0));
    let w = run(&["stats", "--test", "wilcoxon", "--a", s(&a), "--b", s(&b)]);
    assert_eq!(w.status.code(), Some(1), "all differences are zero");
    assert_eq!(run(&["stats", "--a", s(&a), "--b", s(&b)]).status.code(), Some(1), "test kind is required");
}

#[test]
fn inspect_prints_dot_and_curve() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let dot = ok(&["inspect", "--model", s(&models), "--lnode", "1"]);
    assert!(dot.starts_with("graph \"1\" {"));
    assert!(dot.contains("seablock:"));
    let curve = structured(&["inspect", "--model", s(&models), "--curves"]);
    assert_eq!(curve["k"], 2);
    assert_eq!(curve["curve"][0]["k"], 1);
}

#[test]
fn version_mismatch_is_a_user_error() {
    let dir = TempDir::new().unwrap();
    let models = learned(&dir);
    let text = fs::read_to_string(&models).unwrap().replace("\"version\": 1", "\"version\": 9");
    fs::write(&models, text).unwrap();
    let out = run(&["inspect", "--model", s(&models)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 9"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["learn", "--corpus"]).status.code(), Some(1));
    assert_eq!(run(&["learn", "--corpus", "x", "--out", "y", "--chunk-width", "0"]).status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}
