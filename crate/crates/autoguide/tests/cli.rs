//! Command-line behavior through the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn autoguide(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoguide")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn gen(dir: &Path) {
    let o = autoguide(dir, &["gen-data", "--out", ".", "--tasks", "8", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&autoguide(dir.path(), &["--help"])), 0);
    assert_eq!(code(&autoguide(dir.path(), &["--version"])), 0);
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&autoguide(dir.path(), &[])), 1);
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--bogus"])), 1);
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--backend", "grpc"])), 1);
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--mode", "sometimes"])), 1);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    std::fs::write(dir.path().join("bad.json"), r#"{"unknown_field": true}"#).unwrap();
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "bad.json"])), 1);
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json", "--jobs", "0"])), 1);
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json", "--k", "0"])), 1);
    // Replay without a cassette.
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json", "--backend", "replay"])), 1);
}

#[test]
fn missing_config_or_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "nope.json"])), 2);
    std::fs::remove_file(dir.path().join("offline.jsonl")).unwrap();
    let o = autoguide(dir.path(), &["extract", "--config", "config.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("offline.jsonl"));
}

#[test]
fn eval_without_store_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json"])), 2);
    // Mode none needs no store.
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json", "--mode", "none"])), 0);
}

#[test]
fn empty_dataset_warns_and_writes_an_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    std::fs::write(dir.path().join("offline.jsonl"), "").unwrap();
    let o = autoguide(dir.path(), &["extract", "--config", "config.json"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("warn"));
    let store = autoguide_core::GuidelineStore::from_json(&std::fs::read_to_string(dir.path().join("store.json")).unwrap());
    assert!(store.unwrap().is_empty());
}

#[test]
fn replay_miss_and_backend_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = autoguide(dir.path(), &["extract", "--config", "config.json", "--backend", "replay", "--cassette", "empty.jsonl"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // A script that never answers makes every pair fail.
    std::fs::write(dir.path().join("script.json"), r#"{"rules": []}"#).unwrap();
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "config.json"])), 3);
}

#[test]
fn corrupt_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    std::fs::write(dir.path().join("store.json"), r#"{"version": 9, "entries": []}"#).unwrap();
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json"])), 2);
    assert_eq!(code(&autoguide(dir.path(), &["store", "inspect", "store.json"])), 2);
    std::fs::write(dir.path().join("bad.jsonl"), "{}\n").unwrap();
    assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json", "--mode", "none", "--backend", "replay", "--cassette", "bad.jsonl"])), 2);
}

#[test]
fn flags_override_config_and_last_one_wins() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "config.json", "--store", "a.json", "--store", "b.json"])), 0);
    assert!(!dir.path().join("a.json").exists());
    assert!(dir.path().join("b.json").exists());
    let o = autoguide(
        dir.path(),
        &["eval", "--config", "config.json", "--store", "b.json", "--mode", "none", "--mode", "context_aware", "--k", "1", "--seed", "11", "--out", "o"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["mode"], "context_aware");
    assert_eq!(rows[0]["k"], 1);
    assert_eq!(report["metadata"]["seed"], 11);
    assert_eq!(report["metadata"]["timestamp"], serde_json::Value::Null);
}

#[test]
fn eval_writes_json_table_and_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "config.json"])), 0);
    let o = autoguide(dir.path(), &["eval", "--config", "config.json", "--jobs", "4"]);
    assert_eq!(code(&o), 0);
    let table = std::fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
    let modes: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(modes, ["none", "all_guidelines", "context_aware"]);
    for mode in modes {
        let t = std::fs::read_to_string(dir.path().join(format!("out/transcripts/{mode}.jsonl"))).unwrap();
        let ids: Vec<String> = t
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["task_id"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(ids.len(), 8);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn jobs_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "config.json"])), 0);
    let run = |jobs: &str, out: &str| {
        assert_eq!(code(&autoguide(dir.path(), &["eval", "--config", "config.json", "--jobs", jobs, "--out", out])), 0);
        (
            std::fs::read(dir.path().join(out).join("report.json")).unwrap(),
            std::fs::read(dir.path().join(out).join("transcripts/context_aware.jsonl")).unwrap(),
        )
    };
    assert_eq!(run("1", "serial"), run("8", "parallel"));
}

#[test]
fn store_inspect_lists_keys() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    assert_eq!(code(&autoguide(dir.path(), &["extract", "--config", "config.json"])), 0);
    let o = autoguide(dir.path(), &["store", "inspect", "--config", "config.json"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("4 keys, 4 guidelines\n"), "{text}");
    assert!(text.contains("When at the hallway fork, you should go north."));
}
