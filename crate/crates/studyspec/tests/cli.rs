mod common;

use std::process::Command;

use common::{cli, fixture, path_str};
use serde_json::Value;
use tempfile::TempDir;

fn json(out: &str) -> Value {
    serde_json::from_str(out).unwrap_or_else(|e| panic!("not one JSON document ({e}):\n{out}"))
}

#[test]
fn validate_clean_is_silent() {
    let (code, out) = cli(&["validate", path_str(&fixture("clean.json"))]);
    assert_eq!(code, 0);
    assert_eq!(out, "");
}

#[test]
fn validate_reports_errors() {
    let (code, out) = cli(&["validate", path_str(&fixture("mutants/dangling_reference.json"))]);
    assert_eq!(code, 1);
    assert!(out.starts_with("ERROR E_UNDEFINED_COMPONENT sequence.components[4] — "), "{out}");

    let (code, out) = cli(&["--json", "validate", path_str(&fixture("mutants/bad_spacing.json"))]);
    assert_eq!(code, 1);
    let doc = json(&out);
    assert_eq!(doc["ok"], false);
    assert_eq!(doc["errors"][0]["code"], "E_BAD_SPACING");
}

#[test]
fn validate_canonical_round_trips() {
    let (code, out) = cli(&["validate", "--canonical", path_str(&fixture("study.json"))]);
    assert_eq!(code, 0);
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("canon.json");
    std::fs::write(&p, &out).unwrap();
    let (code, again) = cli(&["validate", "--canonical", path_str(&p)]);
    assert_eq!(code, 0);
    assert_eq!(again, out);
}

#[test]
fn lint_prints_one_line_per_finding() {
    let cfg = fixture("mutants/unused_component.json");
    let (code, out) = cli(&["lint", path_str(&cfg)]);
    assert_eq!(code, 0);
    assert_eq!(out, "WARN W_UNUSED_COMPONENT components.orphan — component `orphan` is never used\n");
    let (code, _) = cli(&["lint", "--deny-warnings", path_str(&cfg)]);
    assert_eq!(code, 1);
    let (code, _) = cli(&["lint", "--deny-warnings", path_str(&fixture("clean.json"))]);
    assert_eq!(code, 0);
}

#[test]
fn usage_and_runtime_exit_codes() {
    assert_eq!(cli(&["frobnicate"]).0, 2);
    assert_eq!(cli(&["sequence"]).0, 2);
    assert_eq!(cli(&["simulate", path_str(&fixture("latin3.json")), "--n", "3", "--abandon", "1.5"]).0, 2);
    assert_eq!(cli(&["validate", "/nonexistent/config.json"]).0, 3);
    let (code, out) = cli(&["--json", "replay", "timeline", "/nonexistent/log.jsonl"]);
    assert_eq!(code, 3);
    assert_eq!(json(&out)["exitCode"], 3);
}

#[test]
fn sequence_summary_and_json_agree() {
    let cfg = fixture("study.json");
    let (_, summary) = cli(&["sequence", path_str(&cfg), "--participant-index", "2", "--summary"]);
    let (_, full) = cli(&["sequence", path_str(&cfg), "--participant-index", "2"]);
    let items = json(&full)["items"].as_array().unwrap().clone();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), items.len());
    for (line, item) in lines.iter().zip(&items) {
        assert!(line.contains(item["componentName"].as_str().unwrap()), "{line}");
        assert_eq!(line.ends_with("[interruption]"), item["isInterruption"] == true);
    }
}

#[test]
fn pool_lifecycle() {
    let dir = TempDir::new().unwrap();
    let pool = dir.path().join("pool.json");
    let p = path_str(&pool);
    let cfg = fixture("latin3.json");
    assert_eq!(cli(&["pool", "init", p, "--block-path", "root/conditions", "--config", path_str(&cfg)]).0, 0);
    assert_eq!(cli(&["pool", "init", p, "--block-path", "root/conditions", "--order", "3"]).0, 2);

    let (code, out) = cli(&["--json", "pool", "assign", p, "--participant", "ann", "--now", "1000"]);
    assert_eq!(code, 0);
    let row = json(&out)["row"].clone();
    assert_eq!(row.as_array().unwrap().len(), 3);
    cli(&["pool", "assign", p, "--participant", "bob", "--now", "2000"]);
    assert_eq!(cli(&["pool", "complete", p, "--participant", "ann"]).0, 0);
    assert_eq!(cli(&["pool", "complete", p, "--participant", "ann"]).0, 3);

    let (_, out) = cli(&["--json", "pool", "reclaim", p, "--now", "5000", "--timeout", "2500"]);
    assert_eq!(json(&out)["reclaimed"], serde_json::json!(["bob"]));

    let (_, out) = cli(&["--json", "pool", "report", p]);
    let report = json(&out);
    assert_eq!(report["completed"], 1);
    assert_eq!(report["assigned"], 0);
    assert_eq!(report["queued"], 2);
    assert_eq!(report["conserved"], true);

    // the sequence for a pooled participant follows its stored row
    let (code, seq) = cli(&["--json", "sequence", path_str(&cfg), "--participant", "ann", "--pool", p]);
    assert_eq!(code, 0);
    assert_eq!(json(&seq)["blockOrders"]["root/conditions"], row);
}

#[test]
fn session_run_then_export() {
    let dir = TempDir::new().unwrap();
    let pool = dir.path().join("pool.json");
    let trials = dir.path().join("trials");
    std::fs::create_dir(&trials).unwrap();
    let cfg = fixture("latin3.json");
    cli(&["pool", "init", path_str(&pool), "--block-path", "root/conditions", "--order", "3"]);
    for (i, pid) in ["p1", "p2"].iter().enumerate() {
        let out = trials.join(format!("{pid}.trials.json"));
        let (code, _) = cli(&[
            "session",
            "run",
            path_str(&cfg),
            "--participant-index",
            &i.to_string(),
            "--participant",
            pid,
            "--policy",
            "oracle",
            "--pool",
            path_str(&pool),
            "--out",
            path_str(&out),
        ]);
        assert_eq!(code, 0);
    }
    let (_, report) = cli(&["--json", "pool", "report", path_str(&pool)]);
    assert_eq!(json(&report)["completed"], 2);

    let tidy = dir.path().join("tidy.csv");
    assert_eq!(cli(&["export", "csv", path_str(&trials), "--out", path_str(&tidy)]).0, 0);
    let text = std::fs::read_to_string(&tidy).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let recs: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    // three graded image components per participant
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| &r[6] == "true"));
    assert_eq!(recs.iter().filter(|r| &r[0] == "p1").count(), 3);
}

#[test]
fn simulate_logs_feed_analysis() {
    let dir = TempDir::new().unwrap();
    let logs = dir.path().join("logs");
    let cohort = dir.path().join("cohort.json");
    let (code, out) = cli(&[
        "--json",
        "--seed",
        "3",
        "simulate",
        path_str(&fixture("study.json")),
        "--n",
        "4",
        "--policy",
        "weber",
        "--out",
        path_str(&cohort),
        "--emit-logs",
        path_str(&logs),
    ]);
    assert_eq!(code, 0);
    let summary = json(&out);
    let attempts = summary["attempts"].as_u64().unwrap();
    let full = json(&std::fs::read_to_string(&cohort).unwrap());
    assert_eq!(full["participants"].as_array().unwrap().len() as u64, attempts);

    let mut jsonl: Vec<String> = std::fs::read_dir(&logs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .map(|p| p.to_str().unwrap().to_string())
        .collect();
    jsonl.sort();
    assert_eq!(jsonl.len() as u64, attempts);

    for log in &jsonl {
        assert_eq!(cli(&["replay", "validate", log]).0, 0);
        let (code, tl) = cli(&["replay", "timeline", log]);
        assert_eq!(code, 0);
        assert!(json(&tl)["intervals"].as_array().is_some());
    }

    let mut args = vec!["--json", "analyze", "dwell"];
    args.extend(jsonl.iter().map(String::as_str));
    let (code, out) = cli(&args);
    assert_eq!(code, 0);
    let doc = json(&out);
    let kept = doc["kept"].as_array().unwrap().len();
    let excluded = doc["excluded"].as_array().unwrap().len();
    assert_eq!((kept + excluded) as u64, attempts);

    let (code, out) = cli(&["export", "csv", path_str(&logs)]);
    assert_eq!(code, 0);
    assert!(out.lines().count() > 1);
}

#[test]
fn replay_rejects_broken_log() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("bad.jsonl");
    std::fs::write(
        &log,
        "{\"t\":5,\"kind\":\"componentStart\",\"instanceId\":\"c\"}\n{\"t\":3,\"kind\":\"componentEnd\",\"instanceId\":\"c\"}\n",
    )
    .unwrap();
    let (code, out) = cli(&["replay", "validate", path_str(&log)]);
    assert_eq!(code, 1);
    assert!(out.starts_with("NON_MONOTONIC"), "{out}");
    assert_eq!(cli(&["replay", "timeline", path_str(&log)]).0, 1);
}

#[test]
fn ranksum_from_csv_columns() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "score\n1\n2\n").unwrap();
    std::fs::write(&b, "3\n4\n").unwrap();
    let (code, out) = cli(&["analyze", "ranksum", "--a", path_str(&a), "--b", path_str(&b)]);
    assert_eq!(code, 0);
    assert_eq!(out, "W=3 p=0.3333333333333333 n_a=2 n_b=2 method=exact\n");
    std::fs::write(&b, "").unwrap();
    assert_eq!(cli(&["analyze", "ranksum", "--a", path_str(&a), "--b", path_str(&b)]).0, 2);
}

#[test]
fn staircase_csv_columns() {
    let (code, out) = cli(&["staircase", "--base", "0.6", "--observer-jnd", "0.16", "--runs", "5", "--seed", "9"]);
    assert_eq!(code, 0);
    let mut r = csv::Reader::from_reader(out.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["seed", "trials", "terminationReason", "jndEstimate", "attentionPassRate", "excluded"]);
    let seeds: Vec<String> = r.records().map(|x| x.unwrap()[0].to_string()).collect();
    assert_eq!(seeds, ["9", "10", "11", "12", "13"]);
}

#[test]
fn binary_separates_streams() {
    let exe = env!("CARGO_BIN_EXE_studyspec");
    let out = Command::new(exe)
        .args(["lint", path_str(&fixture("mutants/dangling_reference.json"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("E_UNDEFINED_COMPONENT"));

    let out = Command::new(exe).args(["--json", "sequence", path_str(&fixture("latin3.json"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    json(&String::from_utf8(out.stdout).unwrap());

    let out = Command::new(exe).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}
