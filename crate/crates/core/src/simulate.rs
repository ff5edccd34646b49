//! Synthetic participants and cohorts.
//!
//! Cohorts run sequentially on a virtual clock: participant `k` arrives at
//! `k * gap`, takes Latin rows from the shared pools, and either completes,
//! is excluded by the staircase attention rule, or abandons. Abandoned rows
//! come back through timeout reclamation before later arrivals are served.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::{Order, ResponseKind, StudyConfig};
use crate::latin::{LatinPool, PoolError, Row};
use crate::mathfn::logistic;
use crate::provenance::{synthesize_log, ProvenanceEvent};
use crate::runtime::{Next, RuntimeError, Served, Session, TrialRecord, CORRECT_ANSWERS_KEY};
use crate::seed::{self, StreamRng};
use crate::sequence::{realize_sequence, PoolAssignments, SequenceError};
use crate::staircase::{
    staircase_init, LastResponse, Side, StaircaseError, StaircaseParams, Step, Termination, TrialSpec,
};

/// Probability that an attention check is answered correctly by an
/// observer who is paying attention.
pub const ATTENTION_ACCURACY: f64 = 0.995;
/// Added to the reclamation timeout to get the default inter-arrival gap.
pub const ARRIVAL_MARGIN_MS: u64 = 60_000;
/// Mean virtual time per answered component.
pub const DEFAULT_TRIAL_MS: u64 = 4_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum PolicyKind {
    Oracle,
    UniformRandom,
    #[serde(rename = "weberObserver", rename_all = "camelCase")]
    Weber { jnd75: f64, slope: f64 },
    AlwaysLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParticipantPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    pub abandon_prob: f64,
}

impl ParticipantPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        ParticipantPolicy { kind, abandon_prob: 0.0 }
    }

    pub fn abandoning(mut self, p: f64) -> Self {
        self.abandon_prob = p;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.abandon_prob) {
            return Err(SimError::BadPolicy(format!("abandonProb {} outside [0, 1]", self.abandon_prob)));
        }
        if let PolicyKind::Weber { jnd75, slope } = self.kind {
            if !(jnd75.is_finite() && slope.is_finite() && slope > 0.0) {
                return Err(SimError::BadPolicy("weber observer needs finite jnd75 and slope > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("E_BAD_POLICY: {0}")]
    BadPolicy(String),
    #[error("E_ATTEMPT_CAP: {attempts} attempts produced only {finished} finished sessions")]
    AttemptCap { attempts: usize, finished: usize, partial: Box<CohortResult> },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::BadPolicy(_) => "E_BAD_POLICY",
            SimError::AttemptCap { .. } => "E_ATTEMPT_CAP",
            SimError::Pool(e) => e.code(),
            SimError::Sequence(e) => e.code(),
            SimError::Runtime(e) => e.code(),
            SimError::Staircase(e) => e.code(),
        }
    }
}

/// Identifier of the `k`-th simulated participant.
pub fn participant_id(k: u64) -> String {
    format!("p{k:05}")
}

/// `0.5 + 0.5 * logistic((d - jnd75) / slope)`; exactly 0.75 at `jnd75`.
pub fn weber_p_correct(d: f64, jnd75: f64, slope: f64) -> f64 {
    0.5 + 0.5 * logistic((d - jnd75) / slope)
}

fn side_from_coin(rng: &mut dyn RngCore) -> Side {
    if seed::coin(rng) {
        Side::Right
    } else {
        Side::Left
    }
}

/// Chooses a side on a 2-AFC trial with difference `d`.
pub fn respond_2afc(kind: &PolicyKind, d: f64, correct_side: Side, attention: bool, rng: &mut dyn RngCore) -> LastResponse {
    let selected = match *kind {
        PolicyKind::Oracle => correct_side,
        PolicyKind::AlwaysLeft => Side::Left,
        PolicyKind::UniformRandom => side_from_coin(rng),
        PolicyKind::Weber { jnd75, slope } => {
            let p = if attention { ATTENTION_ACCURACY } else { weber_p_correct(d, jnd75, slope) };
            if seed::unit(rng) < p {
                correct_side
            } else {
                correct_side.opposite()
            }
        }
    };
    LastResponse { selected_side: selected, correct: selected == correct_side }
}

pub fn weber_observer_respond(trial: &TrialSpec, jnd75: f64, slope: f64, rng: &mut dyn RngCore) -> LastResponse {
    respond_2afc(
        &PolicyKind::Weber { jnd75, slope },
        trial.difference(),
        trial.correct_side,
        trial.is_attention_check,
        rng,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaircaseRun {
    pub seed: u64,
    /// Served trials, attention checks included.
    pub trials: u64,
    pub regular_trials: usize,
    pub termination: Termination,
    pub jnd_estimate: f64,
    pub attention_pass_rate: Option<f64>,
    pub excluded: bool,
    /// 1-based trial positions of the attention checks.
    pub attention_positions: Vec<u64>,
}

/// Runs one staircase to termination against a policy. The staircase and
/// the responder draw from separate sub-streams of `seed`.
pub fn run_staircase(params: &StaircaseParams, kind: &PolicyKind, seed: u64) -> Result<StaircaseRun, SimError> {
    let mut state = staircase_init(params.clone(), seed::derive_seed(seed, "staircase", 0))?;
    let mut rng = seed::stream(seed::derive_seed(seed, "observer", 0));
    let mut last = None;
    let mut attention_positions = Vec::new();
    let termination = loop {
        match state.next(last)? {
            Step::Stop(t) => break t,
            Step::Trial(trial) => {
                if trial.is_attention_check {
                    attention_positions.push(trial.trial_index);
                }
                last = Some(respond_2afc(
                    kind,
                    trial.difference(),
                    trial.correct_side,
                    trial.is_attention_check,
                    &mut rng,
                ));
            }
        }
    };
    Ok(StaircaseRun {
        seed,
        trials: state.trial_index,
        regular_trials: state.history.len(),
        termination,
        jnd_estimate: state.estimate_jnd()?,
        attention_pass_rate: state.attention_pass_rate(),
        excluded: state.should_exclude(),
        attention_positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Outcome {
    Completed,
    Abandoned,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParticipantResult {
    pub participant_id: String,
    /// 0-based attempt number; also the participant index for realization.
    pub attempt: u64,
    pub outcome: Outcome,
    /// Answered components.
    pub trials: usize,
    pub graded: usize,
    pub correct: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jnd_estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_pass_rate: Option<f64>,
    pub assigned_rows: BTreeMap<String, Row>,
    pub block_orders: BTreeMap<String, Vec<usize>>,
    pub arrived_at: u64,
    pub finished_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "op")]
pub enum PoolOp {
    Assign { t: u64, block_path: String, participant: String, row: Row },
    Complete { t: u64, block_path: String, participant: String },
    Reclaim { t: u64, block_path: String, timeout: u64, reclaimed: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CohortOptions {
    /// Sessions that must finish (completed or excluded).
    pub n: usize,
    pub policy: ParticipantPolicy,
    pub seed: u64,
    /// Reclamation timeout; `None` disables reclamation.
    pub timeout_ms: Option<u64>,
    /// Defaults to `timeout + 60000`, or 60000 without a timeout.
    pub inter_arrival_ms: Option<u64>,
    pub trial_ms: u64,
}

impl CohortOptions {
    pub fn new(n: usize, policy: ParticipantPolicy, seed: u64) -> Self {
        CohortOptions { n, policy, seed, timeout_ms: None, inter_arrival_ms: None, trial_ms: DEFAULT_TRIAL_MS }
    }

    pub fn timeout(mut self, ms: u64) -> Self {
        self.timeout_ms = Some(ms);
        self
    }

    pub fn gap(&self) -> u64 {
        self.inter_arrival_ms
            .unwrap_or_else(|| self.timeout_ms.unwrap_or(0) + ARRIVAL_MARGIN_MS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CohortResult {
    pub options: CohortOptions,
    pub participants: Vec<ParticipantResult>,
    pub completed: usize,
    pub abandoned: usize,
    pub excluded: usize,
    pub pools: BTreeMap<String, LatinPool>,
    /// `counts[condition][position]` over completed pool rows, per block.
    pub balance: BTreeMap<String, Vec<Vec<u64>>>,
    pub pool_log: Vec<PoolOp>,
    /// Virtual time at which the last session ended.
    pub virtual_clock_ms: u64,
    /// Trial records per attempt, index-aligned with `participants`.
    #[serde(skip)]
    pub records: Vec<Vec<TrialRecord>>,
}

impl CohortResult {
    pub fn attempts(&self) -> usize {
        self.participants.len()
    }

    /// Synthetic provenance log for attempt `k`, built from its records.
    pub fn provenance_log(&self, k: usize) -> Vec<ProvenanceEvent> {
        let intervals: Vec<(String, u64, u64)> = self.records[k]
            .iter()
            .map(|r| (r.instance_id.clone(), r.started_at, r.ended_at))
            .collect();
        synthesize_log(&intervals, seed::derive_seed(self.options.seed, "provenance", k as u64))
    }
}

pub fn simulate_cohort(config: &StudyConfig, opts: &CohortOptions) -> Result<CohortResult, SimError> {
    opts.policy.validate()?;
    let mut pools = BTreeMap::new();
    for b in config.blocks() {
        if b.block.order == Order::LatinSquare {
            pools.insert(b.path.clone(), LatinPool::new(b.path.clone(), b.block.components.len(), opts.seed)?);
        }
    }
    let mut result = CohortResult {
        options: opts.clone(),
        participants: Vec::new(),
        completed: 0,
        abandoned: 0,
        excluded: 0,
        pools: BTreeMap::new(),
        balance: BTreeMap::new(),
        pool_log: Vec::new(),
        virtual_clock_ms: 0,
        records: Vec::new(),
    };
    let cap = 4 * opts.n;
    let gap = opts.gap();
    let mut attempt = 0u64;
    while result.completed + result.excluded < opts.n {
        if attempt as usize >= cap {
            let finished = result.completed + result.excluded;
            finalize(&mut result, pools);
            return Err(SimError::AttemptCap { attempts: cap, finished, partial: Box::new(result) });
        }
        let now = attempt * gap;
        let pid = participant_id(attempt);
        if let Some(timeout) = opts.timeout_ms {
            for (path, pool) in pools.iter_mut() {
                let reclaimed = pool.reclaim_expired(now, timeout)?;
                if !reclaimed.is_empty() {
                    log::debug!("reclaimed {reclaimed:?} from {path} at {now}");
                    result.pool_log.push(PoolOp::Reclaim { t: now, block_path: path.clone(), timeout, reclaimed });
                }
            }
        }
        let mut assignments = PoolAssignments::new();
        for (path, pool) in pools.iter_mut() {
            let row = pool.assign(&pid, now)?;
            result.pool_log.push(PoolOp::Assign {
                t: now,
                block_path: path.clone(),
                participant: pid.clone(),
                row: row.clone(),
            });
            assignments.insert(path.clone(), row);
        }
        let (participant, records) = run_participant(config, opts, attempt, &pid, now, assignments)?;
        if participant.outcome != Outcome::Abandoned {
            for (path, pool) in pools.iter_mut() {
                pool.complete(&pid)?;
                result.pool_log.push(PoolOp::Complete {
                    t: participant.finished_at,
                    block_path: path.clone(),
                    participant: pid.clone(),
                });
            }
        }
        match participant.outcome {
            Outcome::Completed => result.completed += 1,
            Outcome::Abandoned => result.abandoned += 1,
            Outcome::Excluded => result.excluded += 1,
        }
        result.virtual_clock_ms = result.virtual_clock_ms.max(participant.finished_at);
        result.participants.push(participant);
        result.records.push(records);
        attempt += 1;
    }
    finalize(&mut result, pools);
    Ok(result)
}

fn finalize(result: &mut CohortResult, pools: BTreeMap<String, LatinPool>) {
    result.balance = pools.iter().map(|(p, pool)| (p.clone(), pool.balance_report())).collect();
    result.pools = pools;
}

/// Rough session length used to place an abandonment point: one per
/// static item, `maxTrials` plus its attention checks per staircase block.
fn expected_length(config: &StudyConfig, session: &Session) -> u64 {
    let blocks = config.block_index();
    session
        .sequence
        .items
        .iter()
        .map(|it| {
            if !it.dynamic {
                return 1;
            }
            blocks
                .get(it.block_path.as_str())
                .and_then(|_| session.staircase(&it.block_path))
                .map(|s| {
                    let m = s.params.max_trials as u64;
                    m + m / s.params.attention_every.max(1)
                })
                .unwrap_or(1)
        })
        .sum::<u64>()
        .max(1)
}

fn run_participant(
    config: &StudyConfig,
    opts: &CohortOptions,
    attempt: u64,
    pid: &str,
    now: u64,
    assignments: PoolAssignments,
) -> Result<(ParticipantResult, Vec<TrialRecord>), SimError> {
    let realized = realize_sequence(config, attempt, opts.seed, &assignments)?;
    let block_orders = realized.block_orders.clone();
    let mut session = Session::start(config, realized)?;
    let mut rng = seed::stream(seed::derive_seed(opts.seed, "participant", attempt));
    let mut fate = seed::stream(seed::derive_seed(opts.seed, "abandon", attempt));
    let abandon_after = if seed::unit(&mut fate) < opts.policy.abandon_prob {
        Some(seed::below(&mut fate, expected_length(config, &session)))
    } else {
        None
    };
    let mut clock = now;
    let mut abandoned = false;
    loop {
        if abandon_after.is_some_and(|k| session.answers().len() as u64 >= k) {
            abandoned = true;
            break;
        }
        if session.status() != crate::runtime::SessionStatus::Active {
            break;
        }
        let served = match session.next_component()? {
            Next::Done => break,
            Next::Serve(s) => s,
        };
        let responses = answer(config, &opts.policy.kind, &served, &mut rng);
        let started = clock;
        let ended = started + trial_duration(opts.trial_ms, &mut rng);
        clock = ended;
        session.submit_answer(responses, started, ended)?;
    }

    let staircases: Vec<_> = session.dynamic_states().filter_map(|(p, _)| session.staircase(p)).collect();
    let excluded = !abandoned && staircases.iter().any(|s| s.should_exclude());
    let first = staircases.first();
    let outcome = if abandoned {
        Outcome::Abandoned
    } else if excluded {
        Outcome::Excluded
    } else {
        Outcome::Completed
    };
    let records = session.answers().to_vec();
    let graded = records.iter().filter(|r| r.correct.is_some()).count();
    let correct = records.iter().filter(|r| r.correct == Some(true)).count();
    let participant = ParticipantResult {
        participant_id: pid.to_string(),
        attempt,
        outcome,
        trials: records.len(),
        graded,
        correct,
        jnd_estimate: first.filter(|s| s.terminated.is_some()).map(|s| s.jnd_so_far()),
        termination: first.and_then(|s| s.terminated),
        attention_pass_rate: first.and_then(|s| s.attention_pass_rate()),
        assigned_rows: assignments,
        block_orders,
        arrived_at: now,
        finished_at: clock,
    };
    Ok((participant, records))
}

fn option_values(parameters: &Map<String, Value>) -> Vec<Value> {
    match parameters.get("options") {
        Some(Value::Array(opts)) => opts
            .iter()
            .map(|o| match o {
                Value::Object(m) => m.get("value").cloned().unwrap_or(Value::Null),
                v => v.clone(),
            })
            .filter(|v| !v.is_null())
            .collect(),
        _ => Vec::new(),
    }
}

fn filler(kind: ResponseKind) -> Value {
    match kind {
        ResponseKind::Numerical | ResponseKind::Likert | ResponseKind::Slider => Value::from(0),
        _ => Value::from("response"),
    }
}

/// Duration of one answered component, uniform in `[trial_ms/2, 3*trial_ms/2)`.
pub fn trial_duration<R: RngCore + ?Sized>(trial_ms: u64, rng: &mut R) -> u64 {
    trial_ms / 2 + seed::below(rng, trial_ms.max(1))
}

/// Builds a response map for a served component.
pub fn answer(config: &StudyConfig, kind: &PolicyKind, served: &Served, rng: &mut StreamRng) -> Map<String, Value> {
    let mut out = Map::new();
    let side = served.order_params.get("correctSide").and_then(Value::as_str).and_then(Side::parse);
    if let Some(correct_side) = side {
        let d = match (served.order_params.get("r1"), served.order_params.get("r2")) {
            (Some(a), Some(b)) => libm::fabs(a.as_f64().unwrap_or(0.0) - b.as_f64().unwrap_or(0.0)),
            _ => 0.0,
        };
        let attention = served.order_params.get("isAttentionCheck").and_then(Value::as_bool).unwrap_or(false);
        let resp = respond_2afc(kind, d, correct_side, attention, rng);
        if let Some(Value::Object(keys)) = served.order_params.get(CORRECT_ANSWERS_KEY) {
            for k in keys.keys() {
                out.insert(k.clone(), resp.selected_side.as_str().into());
            }
        }
    }
    let Some(def) = config.components.get(&served.component_name) else {
        return out;
    };
    let expected = def.correct_answers.as_ref();
    for r in def.responses() {
        if out.contains_key(&r.id) {
            continue;
        }
        let options = option_values(&r.parameters);
        let known = expected.and_then(|m| m.get(&r.id)).cloned();
        let v = match kind {
            PolicyKind::UniformRandom if !options.is_empty() => {
                options[seed::below(rng, options.len() as u64) as usize].clone()
            }
            PolicyKind::UniformRandom => match known {
                Some(k) if seed::coin(rng) => k,
                _ => filler(r.kind),
            },
            PolicyKind::AlwaysLeft => options.first().cloned().or(known).unwrap_or_else(|| filler(r.kind)),
            PolicyKind::Oracle | PolicyKind::Weber { .. } => {
                known.or_else(|| options.first().cloned()).unwrap_or_else(|| filler(r.kind))
            }
        };
        out.insert(r.id.clone(), v);
    }
    out
}

/// Condition-by-position counts per static block over completed sessions:
/// `counts[child][position]`.
pub fn coverage_stats(config: &StudyConfig, cohort: &CohortResult) -> BTreeMap<String, Vec<Vec<u64>>> {
    let mut out = BTreeMap::new();
    for b in config.blocks() {
        if b.block.is_dynamic() {
            continue;
        }
        let n = b.block.components.len();
        out.insert(b.path.clone(), vec![vec![0u64; b.block.realized_len()]; n]);
    }
    for p in cohort.participants.iter().filter(|p| p.outcome == Outcome::Completed) {
        for (path, order) in &p.block_orders {
            let Some(table) = out.get_mut(path) else { continue };
            for (pos, &child) in order.iter().enumerate() {
                if let Some(cell) = table.get_mut(child).and_then(|row| row.get_mut(pos)) {
                    *cell += 1;
                }
            }
        }
    }
    out
}
