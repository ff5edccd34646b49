//! Structural validation of a resolved configuration.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::model::*;
use super::{IssueCode, ValidationReport};
use crate::runtime::check_strategy;
use crate::sequence::{implicit_assignments, realize_sequence};

/// Participant indices `0..REACHABILITY_SAMPLE` are realized when checking
/// that skip targets appear downstream.
pub const REACHABILITY_SAMPLE: u64 = 100;
pub const REACHABILITY_SEED: u64 = 0;

pub fn validate_config(config: &StudyConfig) -> ValidationReport {
    let mut v = Validator { config, report: ValidationReport::default() };
    v.names();
    v.components();
    v.blocks();
    if v.report.is_ok() {
        v.reachability();
    }
    v.report
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.trim() == s
        && !s.contains(['/', '#'])
        && !s.chars().any(char::is_control)
}

struct Validator<'a> {
    config: &'a StudyConfig,
    report: ValidationReport,
}

impl<'a> Validator<'a> {
    fn names(&mut self) {
        let c = self.config;
        for name in c.components.keys() {
            let path = format!("components.{name}");
            if !valid_name(name) || name == END_TARGET || StudyConfig::is_external(name) {
                self.report.error(IssueCode::BadName, path, format!("invalid component name `{name}`"));
            }
        }
        for name in c.base_components.keys() {
            if c.components.contains_key(name) {
                self.report.error(
                    IssueCode::NameCollision,
                    format!("baseComponents.{name}"),
                    format!("`{name}` is both a component and a base component"),
                );
            }
        }
        for (i, lib) in c.imported_libraries.iter().enumerate() {
            if !valid_name(lib) || lib.contains(':') || lib.contains(char::is_whitespace) {
                self.report.error(
                    IssueCode::BadName,
                    format!("importedLibraries[{i}]"),
                    format!("invalid library name `{lib}`"),
                );
            }
        }
    }

    fn components(&mut self) {
        for (name, def) in &self.config.components {
            let path = format!("components.{name}");
            if def.base.is_some() {
                self.report.error(
                    IssueCode::UnresolvedBase,
                    format!("{path}.base"),
                    "inheritance has not been resolved",
                );
            }
            if def.comp_type.is_none() {
                self.report.error(
                    IssueCode::MissingField,
                    format!("{path}.compType"),
                    "component has no compType after inheritance",
                );
            }
            let mut seen = BTreeSet::new();
            for (i, r) in def.responses().iter().enumerate() {
                if !valid_name(&r.id) {
                    self.report.error(
                        IssueCode::BadName,
                        format!("{path}.responses[{i}].id"),
                        format!("invalid response id `{}`", r.id),
                    );
                }
                if !seen.insert(r.id.as_str()) {
                    self.report.error(
                        IssueCode::DuplicateResponseId,
                        format!("{path}.responses[{i}].id"),
                        format!("response id `{}` is used twice", r.id),
                    );
                }
            }
            if let Some(ca) = &def.correct_answers {
                for k in ca.keys() {
                    if !seen.contains(k.as_str()) {
                        self.report.error(
                            IssueCode::UndefinedResponse,
                            format!("{path}.correctAnswers.{k}"),
                            format!("no response `{k}` to grade"),
                        );
                    }
                }
            }
        }
    }

    fn reference(&mut self, name: &str, path: String) {
        if StudyConfig::is_external(name) {
            self.report.warn(
                IssueCode::ExternalReference,
                path,
                format!("`{name}` is assumed to come from an imported library"),
            );
        } else if !self.config.components.contains_key(name) {
            self.report.error(
                IssueCode::UndefinedComponent,
                path,
                format!("component `{name}` is not defined"),
            );
        }
    }

    fn blocks(&mut self) {
        let blocks = self.config.blocks();
        let mut paths: BTreeMap<&str, &str> = BTreeMap::new();
        let ids: BTreeSet<&str> = blocks.iter().filter_map(|b| b.block.id.as_deref()).collect();
        for b in &blocks {
            if let Some(prev) = paths.insert(b.path.as_str(), b.doc_path.as_str()) {
                self.report.error(
                    IssueCode::DuplicateBlockPath,
                    b.doc_path.clone(),
                    format!("block path `{}` is also used at {prev}", b.path),
                );
            }
        }
        for b in &blocks {
            self.block(b.block, &b.doc_path, &ids);
        }
    }

    fn block(&mut self, block: &Block, doc: &str, ids: &BTreeSet<&str>) {
        if let Some(id) = &block.id {
            if !valid_name(id) || id == END_TARGET || id.bytes().all(|c| c.is_ascii_digit()) {
                self.report.error(IssueCode::BadName, format!("{doc}.id"), format!("invalid block id `{id}`"));
            }
        }
        for (i, child) in block.components.iter().enumerate() {
            if let BlockChild::Component(name) = child {
                self.reference(name, format!("{doc}.components[{i}]"));
            }
        }
        let n = block.components.len();
        match &block.order {
            Order::Dynamic(spec) => {
                if block.id.is_none() {
                    self.report.error(
                        IssueCode::MissingBlockId,
                        format!("{doc}.id"),
                        "dynamic blocks need an id",
                    );
                }
                if let Err((code, msg)) = check_strategy(spec) {
                    self.report.error(code, format!("{doc}.strategy"), msg);
                }
                if !block.interruptions.is_empty() {
                    self.report.error(
                        IssueCode::UnsupportedInterruption,
                        format!("{doc}.interruptions"),
                        "interruptions are not supported on dynamic blocks",
                    );
                }
            }
            _ if n == 0 => {
                self.report.error(
                    IssueCode::EmptyBlock,
                    format!("{doc}.components"),
                    "block has no components",
                );
            }
            _ => {}
        }
        if let Some(k) = block.num_samples {
            if k == 0 {
                self.report.error(
                    IssueCode::BadNumSamples,
                    format!("{doc}.numSamples"),
                    "numSamples must be positive",
                );
            } else if k as usize > n {
                self.report.error(
                    IssueCode::NumSamplesExceeds,
                    format!("{doc}.numSamples"),
                    format!("numSamples {k} exceeds the block's {n} components"),
                );
            }
        }
        let units = block.realized_len() as u64;
        for (i, spec) in block.interruptions.iter().enumerate() {
            let ip = format!("{doc}.interruptions[{i}]");
            if spec.components.is_empty() {
                self.report.error(
                    IssueCode::EmptyInterruption,
                    format!("{ip}.components"),
                    "interruption names no components",
                );
            }
            for (j, name) in spec.components.iter().enumerate() {
                self.reference(name, format!("{ip}.components[{j}]"));
            }
            match spec.placement {
                Placement::Deterministic { spacing, .. } => {
                    if spacing < 2 {
                        self.report.error(
                            IssueCode::BadSpacing,
                            format!("{ip}.spacing"),
                            "spacing must be at least 2",
                        );
                    }
                }
                Placement::Random { num_interruptions, min_gap } => {
                    if num_interruptions == 0 {
                        self.report.error(
                            IssueCode::BadInterruptionCount,
                            format!("{ip}.numInterruptions"),
                            "numInterruptions must be at least 1",
                        );
                    } else if !crate::sequence::random_placement_feasible(units, num_interruptions, min_gap)
                    {
                        self.report.error(
                            IssueCode::Unsatisfiable,
                            ip.clone(),
                            format!(
                                "{num_interruptions} interruptions with minGap {min_gap} do not fit {units} items"
                            ),
                        );
                    }
                }
            }
        }
        for (i, cond) in block.skip.iter().enumerate() {
            let sp = format!("{doc}.skip[{i}]");
            match &cond.rule {
                SkipRule::Block { block_id, threshold, .. }
                | SkipRule::RepeatedBlock { block_id, threshold, .. } => {
                    if !ids.contains(block_id.as_str()) {
                        self.report.error(
                            IssueCode::UndefinedBlockId,
                            format!("{sp}.blockId"),
                            format!("no block has id `{block_id}`"),
                        );
                    }
                    if *threshold == 0 {
                        self.report.error(
                            IssueCode::BadThreshold,
                            format!("{sp}.threshold"),
                            "threshold must be positive",
                        );
                    }
                }
                SkipRule::Response { component_name, response_id, .. } => {
                    match self.config.components.get(component_name) {
                        None => self.report.error(
                            IssueCode::UndefinedComponent,
                            format!("{sp}.componentName"),
                            format!("component `{component_name}` is not defined"),
                        ),
                        Some(def) if !def.responses().iter().any(|r| &r.id == response_id) => {
                            self.report.error(
                                IssueCode::UndefinedResponse,
                                format!("{sp}.responseId"),
                                format!("`{component_name}` has no response `{response_id}`"),
                            )
                        }
                        Some(_) => {}
                    }
                }
            }
            if let SkipTarget::Name(t) = &cond.target {
                if !self.config.components.contains_key(t) && !ids.contains(t.as_str()) {
                    self.report.error(
                        IssueCode::UndefinedSkipTarget,
                        format!("{sp}.target"),
                        format!("skip target `{t}` is neither a component nor a block id"),
                    );
                }
            }
        }
    }

    /// Every non-`end` skip target must appear after the owning block's
    /// last item in each sampled realization.
    fn reachability(&mut self) {
        let blocks = self.config.blocks();
        let with_targets: Vec<_> = blocks
            .iter()
            .filter(|b| b.block.skip.iter().any(|c| matches!(c.target, SkipTarget::Name(_))))
            .collect();
        if with_targets.is_empty() {
            return;
        }
        let mut flagged = BTreeSet::new();
        for pidx in 0..REACHABILITY_SAMPLE {
            let assignments = implicit_assignments(self.config, pidx, REACHABILITY_SEED);
            let seq = match realize_sequence(self.config, pidx, REACHABILITY_SEED, &assignments) {
                Ok(s) => s,
                Err(e) => {
                    self.report.error(
                        IssueCode::Unsatisfiable,
                        "sequence",
                        format!("participant {pidx} cannot be realized: {e}"),
                    );
                    return;
                }
            };
            for b in &with_targets {
                let Some(last) = seq.items.iter().rposition(|it| path_within(&it.block_path, &b.path))
                else {
                    continue;
                };
                for (i, cond) in b.block.skip.iter().enumerate() {
                    let SkipTarget::Name(t) = &cond.target else { continue };
                    let found = seq.items[last + 1..].iter().any(|it| it.matches_target(t));
                    if !found && flagged.insert((b.doc_path.clone(), i)) {
                        self.report.error(
                            IssueCode::SkipTargetUnreachable,
                            format!("{}.skip[{i}].target", b.doc_path),
                            format!(
                                "`{t}` does not appear after block `{}` for participant {pidx}",
                                b.path
                            ),
                        );
                    }
                }
            }
        }
    }
}
