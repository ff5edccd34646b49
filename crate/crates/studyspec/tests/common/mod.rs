#![allow(dead_code)]

use std::path::PathBuf;

use studyspec_core::config::{check_document, ParseMode, StudyConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn config(name: &str) -> StudyConfig {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    check_document(&text, ParseMode::Strict).config.expect("fixture validates")
}

/// Runs the CLI in process; returns the exit code and stdout.
pub fn cli(args: &[&str]) -> (i32, String) {
    let mut argv = vec!["studyspec"];
    argv.extend_from_slice(args);
    studyspec::cli::run_with_args(argv)
}

pub fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}
