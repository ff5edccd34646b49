//! Participant session state machine.
//!
//! A session walks a realized sequence: `next_component` serves an item,
//! `submit_answer` grades it and evaluates skip conditions. Dynamic blocks
//! sit in the sequence as placeholders; when the cursor reaches one, the
//! block's [`OrderingStrategy`] is asked for the next trial, which is
//! inserted in front of the placeholder. A `Stop` removes the placeholder.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::any::Any;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::{
    enclosing_paths, path_within, segments, Block, BlockChild, Comparator, DynamicSpec, IssueCode, Order,
    SkipCheck, SkipRule, SkipTarget, StudyConfig,
};
use crate::seed;
use crate::sequence::{RealizedItem, RealizedSequence};
use crate::staircase::{self, LastResponse, Side, StaircaseParams, StaircaseState, Step};
use crate::value::{scalar_cmp, scalar_eq};

pub const STAIRCASE: &str = "staircase";
/// Strategy payload key naming the 2-AFC response (default `choice`).
pub const RESPONSE_ID_KEY: &str = "responseId";
pub const DEFAULT_RESPONSE_ID: &str = "choice";
/// Order-param key whose mapping overrides the component's correct answers.
pub const CORRECT_ANSWERS_KEY: &str = "correctAnswers";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("E_SESSION_ENDED: the session has ended")]
    SessionEnded,
    #[error("E_ANSWER_PENDING: the served component has not been answered")]
    AnswerPending,
    #[error("E_NO_PENDING: no component is waiting for an answer")]
    NoPending,
    #[error("E_MISSING_REQUIRED: required response `{0}` is missing")]
    MissingRequired(String),
    #[error("E_BAD_TIMES: endedAt precedes startedAt")]
    BadTimes,
    #[error("E_UNKNOWN_STRATEGY: no ordering strategy named `{0}`")]
    UnknownStrategy(String),
    #[error("E_STRATEGY: {0}")]
    Strategy(String),
}

impl RuntimeError {
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::SessionEnded => "E_SESSION_ENDED",
            RuntimeError::AnswerPending => "E_ANSWER_PENDING",
            RuntimeError::NoPending => "E_NO_PENDING",
            RuntimeError::MissingRequired(_) => "E_MISSING_REQUIRED",
            RuntimeError::BadTimes => "E_BAD_TIMES",
            RuntimeError::UnknownStrategy(_) => "E_UNKNOWN_STRATEGY",
            RuntimeError::Strategy(_) => "E_STRATEGY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialRecord {
    pub instance_id: String,
    pub component_name: String,
    pub block_path: String,
    pub started_at: u64,
    pub ended_at: u64,
    pub responses: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default)]
    pub order_params: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EndReason {
    Finished,
    SkippedToEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "status", content = "reason")]
pub enum SessionStatus {
    Active,
    Ended(EndReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub instance_id: String,
    pub component_name: String,
    pub block_path: String,
    pub is_interruption: bool,
    pub order_params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Next {
    Serve(Served),
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyStep {
    Trial { component_name: Option<String>, order_params: Map<String, Value> },
    Stop { reason: String },
}

/// Runtime ordering for a dynamic block.
pub trait OrderingStrategy: Any {
    fn name(&self) -> &str;
    /// `last` is this block's most recent answered trial, if the previous
    /// serve came from this strategy.
    fn next_trial(&mut self, last: Option<&TrialRecord>) -> Result<StrategyStep, RuntimeError>;
    fn as_any(&self) -> &dyn Any;
}

/// Checks a dynamic block's strategy name and parameters.
pub fn check_strategy(spec: &DynamicSpec) -> Result<(), (IssueCode, String)> {
    match spec.strategy.as_str() {
        STAIRCASE => StaircaseStrategy::params(&spec.params)
            .map(|_| ())
            .map_err(|e| (IssueCode::BadStrategyParams, e.to_string())),
        other => Err((IssueCode::UnknownStrategy, format!("no ordering strategy named `{other}`"))),
    }
}

pub fn build_strategy(
    spec: &DynamicSpec,
    block: &Block,
    seed: u64,
) -> Result<Box<dyn OrderingStrategy>, RuntimeError> {
    match spec.strategy.as_str() {
        STAIRCASE => Ok(Box::new(StaircaseStrategy::new(spec, block, seed)?)),
        other => Err(RuntimeError::UnknownStrategy(other.into())),
    }
}

/// The staircase as a dynamic ordering strategy. Regular trials use the
/// block's first component, attention checks its second (or the first if
/// there is only one). The participant's side goes in the response named
/// by `responseId`.
pub struct StaircaseStrategy {
    pub state: StaircaseState,
    pub trial_component: Option<String>,
    pub attention_component: Option<String>,
    pub response_id: String,
}

impl StaircaseStrategy {
    fn params(payload: &Map<String, Value>) -> Result<(StaircaseParams, String), staircase::StaircaseError> {
        let mut p = payload.clone();
        let response_id = match p.remove(RESPONSE_ID_KEY) {
            Some(Value::String(s)) => s,
            Some(_) => {
                return Err(staircase::StaircaseError::BadParams("`responseId` must be a string".into()))
            }
            None => DEFAULT_RESPONSE_ID.into(),
        };
        Ok((StaircaseParams::from_payload(&p)?, response_id))
    }

    pub fn new(spec: &DynamicSpec, block: &Block, seed: u64) -> Result<Self, RuntimeError> {
        let (params, response_id) = Self::params(&spec.params).map_err(|e| RuntimeError::Strategy(e.to_string()))?;
        let state = staircase::staircase_init(params, seed).map_err(|e| RuntimeError::Strategy(e.to_string()))?;
        let names: Vec<&String> = block
            .components
            .iter()
            .filter_map(|c| match c {
                BlockChild::Component(n) => Some(n),
                BlockChild::Block(_) => None,
            })
            .collect();
        Ok(StaircaseStrategy {
            state,
            trial_component: names.first().map(|s| (*s).clone()),
            attention_component: names.get(1).or(names.first()).map(|s| (*s).clone()),
            response_id,
        })
    }
}

impl OrderingStrategy for StaircaseStrategy {
    fn name(&self) -> &str {
        STAIRCASE
    }

    fn next_trial(&mut self, last: Option<&TrialRecord>) -> Result<StrategyStep, RuntimeError> {
        let last = last.map(|r| {
            let picked = r.responses.get(&self.response_id).and_then(Value::as_str).and_then(Side::parse);
            let correct = r.correct.unwrap_or(false);
            // an unreadable click counts as wrong, on the side that was wrong
            let expected = r
                .order_params
                .get("correctSide")
                .and_then(Value::as_str)
                .and_then(Side::parse)
                .unwrap_or(Side::Left);
            LastResponse { selected_side: picked.unwrap_or(expected.opposite()), correct }
        });
        match self.state.next(last).map_err(|e| RuntimeError::Strategy(e.to_string()))? {
            Step::Stop(t) => Ok(StrategyStep::Stop { reason: t.as_str().into() }),
            Step::Trial(t) => {
                let mut params = Map::new();
                params.insert("r1".into(), t.r1.into());
                params.insert("r2".into(), t.r2.into());
                params.insert("correctSide".into(), t.correct_side.as_str().into());
                params.insert("isAttentionCheck".into(), t.is_attention_check.into());
                params.insert("trialIndex".into(), t.trial_index.into());
                params.insert(
                    "sign".into(),
                    match self.state.params.sign {
                        staircase::CorrelationSign::Positive => "positive",
                        staircase::CorrelationSign::Negative => "negative",
                    }
                    .into(),
                );
                let mut answers = Map::new();
                answers.insert(self.response_id.clone(), t.correct_side.as_str().into());
                params.insert(CORRECT_ANSWERS_KEY.into(), Value::Object(answers));
                let component_name = if t.is_attention_check {
                    self.attention_component.clone()
                } else {
                    self.trial_component.clone()
                };
                Ok(StrategyStep::Trial { component_name, order_params: params })
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub struct Session<'c> {
    config: &'c StudyConfig,
    blocks: BTreeMap<String, &'c Block>,
    pub sequence: RealizedSequence,
    cursor: usize,
    answers: Vec<TrialRecord>,
    dynamic_states: BTreeMap<String, Box<dyn OrderingStrategy>>,
    status: SessionStatus,
    pending: Option<usize>,
    awaiting_feedback: BTreeSet<String>,
    dynamic_counts: BTreeMap<String, u64>,
    fired: BTreeSet<(String, usize)>,
    warnings: Vec<String>,
}

impl<'c> Session<'c> {
    pub fn start(config: &'c StudyConfig, realized: RealizedSequence) -> Result<Self, RuntimeError> {
        let blocks = config.block_index();
        let mut dynamic_states = BTreeMap::new();
        for item in realized.items.iter().filter(|i| i.dynamic) {
            let Some(block) = blocks.get(item.block_path.as_str()) else { continue };
            if let Order::Dynamic(spec) = &block.order {
                let tag = format!("{}#strategy", item.block_path);
                let s = seed::derive_seed(realized.seed, &tag, realized.participant_index);
                dynamic_states.insert(item.block_path.clone(), build_strategy(spec, block, s)?);
            }
        }
        let status = if realized.items.is_empty() {
            SessionStatus::Ended(EndReason::Finished)
        } else {
            SessionStatus::Active
        };
        Ok(Session {
            config,
            blocks,
            sequence: realized,
            cursor: 0,
            answers: Vec::new(),
            dynamic_states,
            status,
            pending: None,
            awaiting_feedback: BTreeSet::new(),
            dynamic_counts: BTreeMap::new(),
            fired: BTreeSet::new(),
            warnings: Vec::new(),
        })
    }

    pub fn config(&self) -> &'c StudyConfig {
        self.config
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn answers(&self) -> &[TrialRecord] {
        &self.answers
    }

    pub fn into_answers(self) -> Vec<TrialRecord> {
        self.answers
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn dynamic_state(&self, block_path: &str) -> Option<&dyn OrderingStrategy> {
        self.dynamic_states.get(block_path).map(|b| b.as_ref())
    }

    pub fn dynamic_states(&self) -> impl Iterator<Item = (&str, &dyn OrderingStrategy)> {
        self.dynamic_states.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    /// The staircase state of a dynamic block, if it runs one.
    pub fn staircase(&self, block_path: &str) -> Option<&StaircaseState> {
        self.dynamic_state(block_path)?
            .as_any()
            .downcast_ref::<StaircaseStrategy>()
            .map(|s| &s.state)
    }

    pub fn pending_item(&self) -> Option<&RealizedItem> {
        self.pending.map(|i| &self.sequence.items[i])
    }

    pub fn next_component(&mut self) -> Result<Next, RuntimeError> {
        if let SessionStatus::Ended(_) = self.status {
            return Err(RuntimeError::SessionEnded);
        }
        if self.pending.is_some() {
            return Err(RuntimeError::AnswerPending);
        }
        loop {
            let Some(item) = self.sequence.items.get(self.cursor) else {
                self.status = SessionStatus::Ended(EndReason::Finished);
                return Ok(Next::Done);
            };
            if !item.dynamic {
                self.pending = Some(self.cursor);
                return Ok(Next::Serve(served(item)));
            }
            let path = item.block_path.clone();
            let placeholder_name = item.component_name.clone();
            let last = if self.awaiting_feedback.remove(&path) { self.answers.last() } else { None };
            let step = match self.dynamic_states.get_mut(&path) {
                Some(strategy) => strategy.next_trial(last)?,
                None => StrategyStep::Stop { reason: "no strategy".into() },
            };
            match step {
                StrategyStep::Stop { .. } => {
                    self.sequence.items.remove(self.cursor);
                }
                StrategyStep::Trial { component_name, order_params } => {
                    let n = self.dynamic_counts.entry(path.clone()).or_insert(0);
                    *n += 1;
                    let name = component_name.unwrap_or(placeholder_name);
                    let item = RealizedItem {
                        instance_id: format!("{path}/{name}#t{n}"),
                        component_name: name,
                        block_path: path.clone(),
                        is_interruption: false,
                        dynamic: false,
                        order_params,
                    };
                    let out = served(&item);
                    self.sequence.items.insert(self.cursor, item);
                    self.pending = Some(self.cursor);
                    self.awaiting_feedback.insert(path);
                    return Ok(Next::Serve(out));
                }
            }
        }
    }

    /// Records an answer to the served component. On error the session is
    /// left untouched.
    pub fn submit_answer(
        &mut self,
        responses: Map<String, Value>,
        started_at: u64,
        ended_at: u64,
    ) -> Result<&TrialRecord, RuntimeError> {
        let idx = self.pending.ok_or(RuntimeError::NoPending)?;
        if ended_at < started_at {
            return Err(RuntimeError::BadTimes);
        }
        let item = &self.sequence.items[idx];
        let def = self.config.components.get(&item.component_name);
        if let Some(def) = def {
            for r in def.responses().iter().filter(|r| r.required) {
                if responses.get(&r.id).is_none_or(Value::is_null) {
                    return Err(RuntimeError::MissingRequired(r.id.clone()));
                }
            }
        }
        let expected: Option<Vec<(&String, &Value)>> = match item.order_params.get(CORRECT_ANSWERS_KEY) {
            Some(Value::Object(m)) => Some(m.iter().collect()),
            _ => def.and_then(|d| d.correct_answers.as_ref()).map(|m| m.iter().collect()),
        };
        let correct = expected.map(|pairs| {
            pairs.into_iter().all(|(k, v)| responses.get(k).is_some_and(|got| scalar_eq(got, v)))
        });
        let record = TrialRecord {
            instance_id: item.instance_id.clone(),
            component_name: item.component_name.clone(),
            block_path: item.block_path.clone(),
            started_at,
            ended_at,
            responses,
            correct,
            order_params: item.order_params.clone(),
        };
        let path = record.block_path.clone();
        self.answers.push(record);
        self.pending = None;
        self.cursor = idx + 1;
        if let Some((owner, i, target)) = self.find_skip(&path) {
            self.fired.insert((owner, i));
            self.jump(&target);
        }
        Ok(self.answers.last().expect("just pushed"))
    }

    /// First satisfied skip condition for an answer in `block_path`,
    /// checking enclosing blocks innermost first and, within a block, in
    /// declaration order. Conditions that already fired are skipped.
    pub fn evaluate_skip(&self, block_path: &str) -> Option<SkipTarget> {
        self.find_skip(block_path).map(|(_, _, t)| t)
    }

    fn find_skip(&self, block_path: &str) -> Option<(String, usize, SkipTarget)> {
        for owner in enclosing_paths(block_path) {
            let Some(block) = self.blocks.get(owner) else { continue };
            for (i, cond) in block.skip.iter().enumerate() {
                if self.fired.contains(&(owner.to_string(), i)) {
                    continue;
                }
                if self.condition_holds(&cond.rule, block_path) {
                    return Some((owner.to_string(), i, cond.target.clone()));
                }
            }
        }
        None
    }

    fn condition_holds(&self, rule: &SkipRule, answered_path: &str) -> bool {
        match rule {
            SkipRule::Block { block_id, check, threshold } => {
                let Some(realization) = self.current_realization(block_id, answered_path) else {
                    return false;
                };
                self.count(*check, |p| path_within(p, &realization)) >= *threshold
            }
            SkipRule::RepeatedBlock { block_id, check, threshold } => {
                self.count(*check, |p| segments(p).any(|s| s == block_id)) >= *threshold
            }
            SkipRule::Response { component_name, response_id, comparator, value } => {
                let Some(last) = self.answers.last() else { return false };
                if &last.component_name != component_name {
                    return false;
                }
                let Some(got) = last.responses.get(response_id) else { return false };
                match comparator {
                    Comparator::Eq => scalar_eq(got, value),
                    Comparator::Neq => !scalar_eq(got, value),
                    Comparator::Lt => scalar_cmp(got, value) == Some(Ordering::Less),
                    Comparator::Gt => scalar_cmp(got, value) == Some(Ordering::Greater),
                }
            }
        }
    }

    /// Path of the realization of `block_id` that encloses the answered
    /// item, or else the most recently answered one.
    fn current_realization(&self, block_id: &str, answered_path: &str) -> Option<String> {
        let prefix_through = |path: &str| -> Option<String> {
            let mut out = String::new();
            for seg in segments(path) {
                if !out.is_empty() {
                    out.push('/');
                }
                out.push_str(seg);
                if seg == block_id {
                    return Some(out);
                }
            }
            None
        };
        prefix_through(answered_path)
            .or_else(|| self.answers.iter().rev().find_map(|r| prefix_through(&r.block_path)))
    }

    fn count(&self, check: SkipCheck, mut within: impl FnMut(&str) -> bool) -> u64 {
        let want = check == SkipCheck::NumCorrect;
        self.answers
            .iter()
            .filter(|r| r.correct == Some(want) && within(&r.block_path))
            .count() as u64
    }

    fn jump(&mut self, target: &SkipTarget) {
        match target {
            SkipTarget::End => self.status = SessionStatus::Ended(EndReason::SkippedToEnd),
            SkipTarget::Name(name) => {
                match self.sequence.items[self.cursor..].iter().position(|it| it.matches_target(name)) {
                    Some(off) => self.cursor += off,
                    None => {
                        let msg = format!("skip target `{name}` not found after position {}", self.cursor);
                        log::warn!("{msg}");
                        self.warnings.push(msg);
                        self.status = SessionStatus::Ended(EndReason::SkippedToEnd);
                    }
                }
            }
        }
    }
}

fn served(item: &RealizedItem) -> Served {
    Served {
        instance_id: item.instance_id.clone(),
        component_name: item.component_name.clone(),
        block_path: item.block_path.clone(),
        is_interruption: item.is_interruption,
        order_params: item.order_params.clone(),
    }
}
