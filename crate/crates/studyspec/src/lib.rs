//! File formats, persistence and the `studyspec` command line on top of
//! `studyspec-core`.

pub mod cli;
pub mod export;
pub mod files;
