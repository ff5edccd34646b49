//! Headless engine for declarative study configurations.
//!
//! The crate compiles a study document into per-participant component
//! sequences, drives sessions through skip logic and dynamic ordering
//! strategies, manages Latin square assignment pools, runs the adaptive
//! 2-AFC staircase, simulates synthetic cohorts and analyzes provenance
//! event logs.
//!
//! Everything here is `no_std` with `alloc`. File formats, persistence and
//! the command line live in the `studyspec` companion crate.
//!
//! Determinism: every random draw goes through [`seed`], which pins the
//! sub-seed hash (FNV-1a 64 + SplitMix64 finalizer) and the stream
//! generator (ChaCha8 from `rand_chacha` 0.3). Floating point special
//! functions come from `libm` so results do not depend on the platform libm.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod config;
pub mod latin;
pub mod lint;
pub mod mathfn;
pub mod provenance;
pub mod ranksum;
pub mod runtime;
pub mod seed;
pub mod sequence;
pub mod simulate;
pub mod staircase;
pub mod value;

pub use config::{
    check_document, parse_study_config, resolve_inheritance, to_canonical_string, validate_config,
    Block, BlockChild, CheckOutcome, ComponentDef, Issue, IssueCode, Order, ParseMode,
    StudyConfig, ValidationReport,
};
pub use latin::{LatinPool, LatinSquare, PoolError};
pub use lint::{lint, LintFinding, LintReport, Severity};
pub use provenance::{DwellReport, EventKind, ProvenanceEvent, Timeline};
pub use ranksum::{rank_sum_test, RankSumResult};
pub use runtime::{Next, Session, SessionStatus, TrialRecord};
pub use sequence::{realize_sequence, RealizedItem, RealizedSequence};
pub use simulate::{simulate_cohort, CohortOptions, CohortResult, ParticipantPolicy, PolicyKind};
pub use staircase::{StaircaseParams, StaircaseState, Step, TrialSpec};
