//! Design-hygiene warnings for configs that already validate.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::config::{resolve_inheritance, BlockChild, CompType, Order, StudyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warn,
    Info,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Warn => "WARN",
            Severity::Info => "INFO",
        }
    }
}

pub const W_UNUSED_COMPONENT: &str = "W_UNUSED_COMPONENT";
pub const W_UNUSED_BASE: &str = "W_UNUSED_BASE";
pub const W_EMPTY_BLOCK: &str = "W_EMPTY_BLOCK";
pub const W_NO_RESPONSES: &str = "W_NO_RESPONSES";
pub const W_SINGLE_CHILD_LATIN: &str = "W_SINGLE_CHILD_LATIN";
pub const W_INTERRUPTION_SHADOWS_NUMSAMPLES: &str = "W_INTERRUPTION_SHADOWS_NUMSAMPLES";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintFinding {
    pub code: &'static str,
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} — {}", self.severity.as_str(), self.code, self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LintReport {
    pub findings: Vec<LintFinding>,
}

impl LintReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.findings.iter().map(|f| f.code).collect()
    }
}

/// Lints a parsed config. Base inheritance is resolved internally where a
/// rule needs effective fields, so the input may still carry `base` links.
pub fn lint(config: &StudyConfig) -> LintReport {
    let mut out = Vec::new();
    let mut warn = |code, path: String, message: String| {
        out.push(LintFinding { code, severity: Severity::Warn, path, message })
    };

    let mut referenced: BTreeSet<&str> = BTreeSet::new();
    for b in config.blocks() {
        for child in &b.block.components {
            if let BlockChild::Component(n) = child {
                referenced.insert(n);
            }
        }
        for spec in &b.block.interruptions {
            referenced.extend(spec.components.iter().map(String::as_str));
        }
    }
    for name in config.components.keys() {
        if !referenced.contains(name.as_str()) {
            warn(W_UNUSED_COMPONENT, format!("components.{name}"), format!("component `{name}` is never used"));
        }
    }

    let bases: BTreeSet<&str> = config.components.values().filter_map(|c| c.base.as_deref()).collect();
    for name in config.base_components.keys() {
        if !bases.contains(name.as_str()) {
            warn(
                W_UNUSED_BASE,
                format!("baseComponents.{name}"),
                format!("base component `{name}` is never inherited"),
            );
        }
    }

    let resolved = resolve_inheritance(config).unwrap_or_else(|_| config.clone());
    for (name, def) in &resolved.components {
        if def.comp_type == Some(CompType::Form) && def.responses().is_empty() {
            warn(W_NO_RESPONSES, format!("components.{name}"), format!("form `{name}` collects no responses"));
        }
    }

    for b in config.blocks() {
        let block = b.block;
        if block.components.is_empty() {
            warn(W_EMPTY_BLOCK, b.doc_path.clone(), format!("block `{}` has no children", b.path));
        }
        if block.order == Order::LatinSquare && block.components.len() == 1 {
            warn(
                W_SINGLE_CHILD_LATIN,
                b.doc_path.clone(),
                format!("latinSquare block `{}` has a single child", b.path),
            );
        }
        let children: BTreeSet<&str> = block
            .components
            .iter()
            .filter_map(|c| match c {
                BlockChild::Component(n) => Some(n.as_str()),
                BlockChild::Block(_) => None,
            })
            .collect();
        for (i, spec) in block.interruptions.iter().enumerate() {
            for name in spec.components.iter().filter(|n| children.contains(n.as_str())) {
                warn(
                    W_INTERRUPTION_SHADOWS_NUMSAMPLES,
                    format!("{}.interruptions[{i}]", b.doc_path),
                    format!("interruption `{name}` is also a child of `{}`", b.path),
                );
            }
        }
    }

    out.sort_by(|a, b| (&a.path, a.code).cmp(&(&b.path, b.code)));
    LintReport { findings: out }
}
