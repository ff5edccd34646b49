//! Tidy CSV export: one row per (participant, instanceId, responseId).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use studyspec_core::runtime::TrialRecord;

use crate::files::{participant_from_path, read_text};

pub const HEADER: [&str; 10] = [
    "participant",
    "instanceId",
    "componentName",
    "blockPath",
    "responseId",
    "value",
    "correct",
    "startedAt",
    "endedAt",
    "durationMs",
];

/// Trial files in `dir`: every `*.json` file, sorted by name.
pub fn trial_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Tidy rows for one participant's records.
pub fn tidy_rows(participant: &str, records: &[TrialRecord]) -> Vec<[String; 10]> {
    let mut rows = Vec::new();
    for r in records {
        for (id, v) in &r.responses {
            rows.push([
                participant.to_string(),
                r.instance_id.clone(),
                r.component_name.clone(),
                r.block_path.clone(),
                id.clone(),
                cell(v),
                r.correct.map(|c| c.to_string()).unwrap_or_default(),
                r.started_at.to_string(),
                r.ended_at.to_string(),
                (r.ended_at - r.started_at).to_string(),
            ]);
        }
    }
    rows
}

/// Reads every trial file in `dir` and renders the tidy table.
pub fn export_dir(dir: &Path) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for path in trial_files(dir)? {
        let records: Vec<TrialRecord> = serde_json::from_str(&read_text(&path)?)
            .with_context(|| format!("{} is not a list of trial records", path.display()))?;
        for row in tidy_rows(&participant_from_path(&path), &records) {
            w.write_record(&row)?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
