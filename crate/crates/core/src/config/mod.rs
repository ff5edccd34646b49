//! The study configuration language: types, parsing, canonical form,
//! inheritance and structural validation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

mod canonical;
mod inherit;
mod model;
mod parse;
mod validate;

pub use canonical::{to_canonical_string, to_canonical_value};
pub use inherit::resolve_inheritance;
pub use model::*;
pub use parse::{parse_study_config, parse_study_config_with_report, ParseMode};
pub use validate::{validate_config, REACHABILITY_SAMPLE, REACHABILITY_SEED};

use crate::lint::{lint, LintReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IssueCode {
    Syntax,
    UnknownField,
    Type,
    MissingField,
    UnknownVariant,
    UnknownCompType,
    UnknownResponseKind,
    UndefinedComponent,
    UndefinedResponse,
    DuplicateResponseId,
    BaseMissing,
    BaseChain,
    UnresolvedBase,
    NameCollision,
    BadName,
    EmptyBlock,
    BadNumSamples,
    NumSamplesExceeds,
    BadSpacing,
    BadInterruptionCount,
    EmptyInterruption,
    Unsatisfiable,
    UnsupportedInterruption,
    MissingBlockId,
    DuplicateBlockPath,
    UnknownStrategy,
    BadStrategyParams,
    UndefinedBlockId,
    UndefinedSkipTarget,
    BadThreshold,
    SkipTargetUnreachable,
    ExternalReference,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        use IssueCode::*;
        match self {
            Syntax => "E_SYNTAX",
            UnknownField => "E_UNKNOWN_FIELD",
            Type => "E_TYPE",
            MissingField => "E_MISSING_FIELD",
            UnknownVariant => "E_UNKNOWN_VARIANT",
            UnknownCompType => "E_UNKNOWN_COMP_TYPE",
            UnknownResponseKind => "E_UNKNOWN_RESPONSE_KIND",
            UndefinedComponent => "E_UNDEFINED_COMPONENT",
            UndefinedResponse => "E_UNDEFINED_RESPONSE",
            DuplicateResponseId => "E_DUPLICATE_RESPONSE_ID",
            BaseMissing => "E_BASE_MISSING",
            BaseChain => "E_BASE_CHAIN",
            UnresolvedBase => "E_UNRESOLVED_BASE",
            NameCollision => "E_NAME_COLLISION",
            BadName => "E_BAD_NAME",
            EmptyBlock => "E_EMPTY_BLOCK",
            BadNumSamples => "E_BAD_NUMSAMPLES",
            NumSamplesExceeds => "E_NUMSAMPLES_EXCEEDS",
            BadSpacing => "E_BAD_SPACING",
            BadInterruptionCount => "E_BAD_INTERRUPTION_COUNT",
            EmptyInterruption => "E_EMPTY_INTERRUPTION",
            Unsatisfiable => "E_UNSATISFIABLE",
            UnsupportedInterruption => "E_UNSUPPORTED_INTERRUPTION",
            MissingBlockId => "E_MISSING_BLOCK_ID",
            DuplicateBlockPath => "E_DUPLICATE_BLOCK_PATH",
            UnknownStrategy => "E_UNKNOWN_STRATEGY",
            BadStrategyParams => "E_BAD_STRATEGY_PARAMS",
            UndefinedBlockId => "E_UNDEFINED_BLOCK_ID",
            UndefinedSkipTarget => "E_UNDEFINED_SKIP_TARGET",
            BadThreshold => "E_BAD_THRESHOLD",
            SkipTargetUnreachable => "E_SKIP_TARGET_UNREACHABLE",
            // warnings
            ExternalReference => "W_EXTERNAL_REFERENCE",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for IssueCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub code: IssueCode,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, code: IssueCode, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Issue { code, path: path.into(), message: message.into() });
    }

    pub fn warn(&mut self, code: IssueCode, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Issue { code, path: path.into(), message: message.into() });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub fn has_code(&self, code: IssueCode) -> bool {
        self.errors.iter().chain(&self.warnings).any(|i| i.code == code)
    }
}

/// Result of running a document through parse, inheritance, validation
/// and (when it compiles) lint.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    /// Resolved config, present when the document has no errors.
    pub config: Option<StudyConfig>,
    pub report: ValidationReport,
    pub lint: LintReport,
}

pub fn check_document(text: &str, mode: ParseMode) -> CheckOutcome {
    let (parsed, mut report) = parse_study_config_with_report(text, mode);
    let Some(parsed) = parsed else {
        return CheckOutcome { config: None, report, lint: LintReport::default() };
    };
    let resolved = match resolve_inheritance(&parsed) {
        Ok(c) => c,
        Err(r) => {
            report.merge(r);
            return CheckOutcome { config: None, report, lint: LintReport::default() };
        }
    };
    report.merge(validate_config(&resolved));
    if !report.is_ok() {
        return CheckOutcome { config: None, report, lint: LintReport::default() };
    }
    let lint = lint(&parsed);
    CheckOutcome { config: Some(resolved), report, lint }
}
