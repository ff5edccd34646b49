//! Adaptive 2-AFC correlation staircase.
//!
//! A regular trial shows the base correlation next to a comparison that is
//! `diff` above (or below) it. Correct answers shrink `diff` by `stepDown`,
//! incorrect ones grow it by `stepUp`; with 0.01/0.03 the walk settles
//! where the observer is right 75% of the time. Every `attentionEvery`-th
//! served trial is an attention check (0.01 vs 1.0) whose correct side is
//! the opposite of the participant's previous click. The run stops when a
//! linear-trend F-test over the last `windowSize` regular diffs finds no
//! trend, or after `maxTrials` regular trials.
//!
//! Diffs live on a 1e-10 grid (see [`crate::mathfn::quantize`]) so that
//! repeated steps do not accumulate representation error.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mathfn::{f_sf, quantize};
use crate::seed::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StaircaseError {
    #[error("E_BAD_PARAMS: {0}")]
    BadParams(String),
    #[error("E_TERMINATED: the staircase has already stopped")]
    Terminated,
    #[error("E_NOT_TERMINATED: the staircase is still running")]
    NotTerminated,
    #[error("E_SHORT_WINDOW: need at least 3 values, got {0}")]
    ShortWindow(usize),
    #[error("E_NO_RESPONSE: the previous trial was not answered")]
    MissingResponse,
}

impl StaircaseError {
    pub fn code(&self) -> &'static str {
        match self {
            StaircaseError::BadParams(_) => "E_BAD_PARAMS",
            StaircaseError::Terminated => "E_TERMINATED",
            StaircaseError::NotTerminated => "E_NOT_TERMINATED",
            StaircaseError::ShortWindow(_) => "E_SHORT_WINDOW",
            StaircaseError::MissingResponse => "E_NO_RESPONSE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationSign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttentionPair {
    pub r_a: f64,
    pub r_b: f64,
}

impl Default for AttentionPair {
    fn default() -> Self {
        AttentionPair { r_a: 0.01, r_b: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaircaseParams {
    pub base_r: f64,
    pub sign: CorrelationSign,
    pub approach: Approach,
    pub start_diff: f64,
    pub step_down: f64,
    pub step_up: f64,
    pub window_size: usize,
    pub max_trials: usize,
    pub attention_every: u64,
    pub attention_pair: AttentionPair,
    pub convergence_alpha: f64,
}

/// Keys accepted by [`StaircaseParams::from_payload`].
pub const PARAM_KEYS: [&str; 11] = [
    "baseR",
    "sign",
    "approach",
    "startDiff",
    "stepDown",
    "stepUp",
    "windowSize",
    "maxTrials",
    "attentionEvery",
    "attentionPair",
    "convergenceAlpha",
];

impl StaircaseParams {
    /// Parameters with the default steps (0.01 down, 0.03 up), a 24-trial
    /// convergence window, a 50-trial cap and an attention check every 10th
    /// trial.
    pub fn new(base_r: f64, approach: Approach, start_diff: f64) -> Self {
        StaircaseParams {
            base_r,
            sign: CorrelationSign::Positive,
            approach,
            start_diff,
            step_down: 0.01,
            step_up: 0.03,
            window_size: 24,
            max_trials: 50,
            attention_every: 10,
            attention_pair: AttentionPair::default(),
            convergence_alpha: 0.05,
        }
    }

    /// Reads parameters from a strategy payload. `baseR`, `approach` and
    /// `startDiff` are required; keys outside [`PARAM_KEYS`] are rejected.
    pub fn from_payload(p: &Map<String, Value>) -> Result<Self, StaircaseError> {
        if let Some(k) = p.keys().find(|k| !PARAM_KEYS.contains(&k.as_str())) {
            return Err(bad(alloc::format!("unknown staircase parameter `{k}`")));
        }
        let num = |k: &str| -> Result<Option<f64>, StaircaseError> {
            match p.get(k) {
                None => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| bad(alloc::format!("`{k}` must be a number"))),
            }
        };
        let int = |k: &str| -> Result<Option<u64>, StaircaseError> {
            match p.get(k) {
                None => Ok(None),
                Some(v) => v
                    .as_u64()
                    .map(Some)
                    .ok_or_else(|| bad(alloc::format!("`{k}` must be a non-negative integer"))),
            }
        };
        let base_r = num("baseR")?.ok_or_else(|| bad("`baseR` is required".into()))?;
        let start_diff = num("startDiff")?.ok_or_else(|| bad("`startDiff` is required".into()))?;
        let approach = match p.get("approach").and_then(Value::as_str) {
            Some("above") => Approach::Above,
            Some("below") => Approach::Below,
            _ => return Err(bad("`approach` must be \"above\" or \"below\"".into())),
        };
        let mut params = StaircaseParams::new(base_r, approach, start_diff);
        match p.get("sign").map(|v| v.as_str()) {
            None | Some(Some("positive")) => {}
            Some(Some("negative")) => params.sign = CorrelationSign::Negative,
            _ => return Err(bad("`sign` must be \"positive\" or \"negative\"".into())),
        }
        if let Some(v) = num("stepDown")? {
            params.step_down = v;
        }
        if let Some(v) = num("stepUp")? {
            params.step_up = v;
        }
        if let Some(v) = int("windowSize")? {
            params.window_size = v as usize;
        }
        if let Some(v) = int("maxTrials")? {
            params.max_trials = v as usize;
        }
        if let Some(v) = int("attentionEvery")? {
            params.attention_every = v;
        }
        if let Some(v) = num("convergenceAlpha")? {
            params.convergence_alpha = v;
        }
        if let Some(pair) = p.get("attentionPair") {
            let get = |k: &str| pair.get(k).and_then(Value::as_f64);
            match (get("rA"), get("rB")) {
                (Some(r_a), Some(r_b)) => params.attention_pair = AttentionPair { r_a, r_b },
                _ => return Err(bad("`attentionPair` needs numeric `rA` and `rB`".into())),
            }
        }
        params.validate()?;
        Ok(params)
    }

    /// Largest difference that keeps the comparison inside [0, 1].
    pub fn max_diff(&self) -> f64 {
        match self.approach {
            Approach::Above => quantize(1.0 - self.base_r),
            Approach::Below => quantize(self.base_r),
        }
    }

    pub fn validate(&self) -> Result<(), StaircaseError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.base_r) {
            return Err(bad("baseR must lie in [0, 1]".into()));
        }
        if !(self.step_down > 0.0 && self.step_up > 0.0) {
            return Err(bad("steps must be positive".into()));
        }
        if self.step_down >= self.step_up {
            return Err(bad("stepDown must be smaller than stepUp".into()));
        }
        if self.start_diff <= self.step_down {
            return Err(bad("startDiff must exceed stepDown".into()));
        }
        if self.window_size < 3 || self.window_size > self.max_trials {
            return Err(bad("windowSize must be at least 3 and at most maxTrials".into()));
        }
        if self.attention_every < 2 {
            return Err(bad("attentionEvery must be at least 2".into()));
        }
        if !(self.convergence_alpha > 0.0 && self.convergence_alpha < 1.0) {
            return Err(bad("convergenceAlpha must lie in (0, 1)".into()));
        }
        if !unit(self.attention_pair.r_a) || !unit(self.attention_pair.r_b) {
            return Err(bad("attention correlations must lie in [0, 1]".into()));
        }
        if self.max_diff() < self.step_down {
            return Err(bad("baseR leaves no room for the comparison".into()));
        }
        Ok(())
    }

    fn clamp_diff(&self, d: f64) -> f64 {
        quantize(d).clamp(self.step_down, self.max_diff())
    }
}

fn bad(msg: String) -> StaircaseError {
    StaircaseError::BadParams(msg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Converged,
    Capped,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Capped => "capped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub diff: f64,
    pub correct: bool,
}

/// What the participant did on the last served trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LastResponse {
    pub selected_side: Side,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialSpec {
    pub r1: f64,
    pub r2: f64,
    /// Side on which the higher correlation is shown.
    pub correct_side: Side,
    pub is_attention_check: bool,
    /// 1-based index among all served trials.
    pub trial_index: u64,
}

impl TrialSpec {
    pub fn difference(&self) -> f64 {
        libm::fabs(self.r1 - self.r2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Trial(TrialSpec),
    Stop(Termination),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    Regular(f64),
    Attention,
}

#[derive(Debug, Clone)]
pub struct StaircaseState {
    pub params: StaircaseParams,
    pub current_diff: f64,
    pub trial_index: u64,
    pub history: Vec<HistoryEntry>,
    pub attention_ledger: Vec<bool>,
    pub last_selection_side: Option<Side>,
    pub terminated: Option<Termination>,
    pending: Option<Pending>,
    rng: StreamRng,
}

pub fn staircase_init(params: StaircaseParams, seed: u64) -> Result<StaircaseState, StaircaseError> {
    params.validate()?;
    let current_diff = params.clamp_diff(params.start_diff);
    Ok(StaircaseState {
        params,
        current_diff,
        trial_index: 0,
        history: Vec::new(),
        attention_ledger: Vec::new(),
        last_selection_side: None,
        terminated: None,
        pending: None,
        rng: seed::stream(seed),
    })
}

impl StaircaseState {
    pub fn comparison_r(&self, diff: f64) -> f64 {
        let r = match self.params.approach {
            Approach::Above => self.params.base_r + diff,
            Approach::Below => self.params.base_r - diff,
        };
        quantize(r).clamp(0.0, 1.0)
    }

    /// Applies the previous answer, decides whether to stop, and otherwise
    /// emits the next trial.
    pub fn next(&mut self, last: Option<LastResponse>) -> Result<Step, StaircaseError> {
        if self.terminated.is_some() {
            return Err(StaircaseError::Terminated);
        }
        match (self.pending.take(), last) {
            (Some(Pending::Regular(diff)), Some(resp)) => {
                self.history.push(HistoryEntry { diff, correct: resp.correct });
                let stepped = if resp.correct { diff - self.params.step_down } else { diff + self.params.step_up };
                self.current_diff = self.params.clamp_diff(stepped);
                self.last_selection_side = Some(resp.selected_side);
            }
            (Some(Pending::Attention), Some(resp)) => {
                self.attention_ledger.push(resp.correct);
                self.last_selection_side = Some(resp.selected_side);
            }
            (Some(p), None) => {
                self.pending = Some(p);
                return Err(StaircaseError::MissingResponse);
            }
            (None, _) => {}
        }

        let w = self.params.window_size;
        if self.history.len() >= w {
            let window: Vec<f64> = self.history[self.history.len() - w..].iter().map(|h| h.diff).collect();
            if check_convergence(&window, self.params.convergence_alpha)? {
                self.terminated = Some(Termination::Converged);
                return Ok(Step::Stop(Termination::Converged));
            }
        }
        if self.history.len() >= self.params.max_trials {
            self.terminated = Some(Termination::Capped);
            return Ok(Step::Stop(Termination::Capped));
        }

        self.trial_index += 1;
        if self.trial_index.is_multiple_of(self.params.attention_every) {
            let correct_side = match self.last_selection_side {
                Some(s) => s.opposite(),
                None => self.coin_side(),
            };
            self.pending = Some(Pending::Attention);
            return Ok(Step::Trial(TrialSpec {
                r1: self.params.attention_pair.r_a,
                r2: self.params.attention_pair.r_b,
                correct_side,
                is_attention_check: true,
                trial_index: self.trial_index,
            }));
        }
        let diff = self.current_diff;
        let correct_side = self.coin_side();
        self.pending = Some(Pending::Regular(diff));
        Ok(Step::Trial(TrialSpec {
            r1: self.params.base_r,
            r2: self.comparison_r(diff),
            correct_side,
            is_attention_check: false,
            trial_index: self.trial_index,
        }))
    }

    fn coin_side(&mut self) -> Side {
        if seed::coin(&mut self.rng) {
            Side::Right
        } else {
            Side::Left
        }
    }

    /// Mean of the last `windowSize` regular diffs (all of them if fewer).
    pub fn estimate_jnd(&self) -> Result<f64, StaircaseError> {
        if self.terminated.is_none() {
            return Err(StaircaseError::NotTerminated);
        }
        Ok(self.jnd_so_far())
    }

    /// Same estimator as [`Self::estimate_jnd`] without the termination
    /// requirement; abandoned runs use it.
    pub fn jnd_so_far(&self) -> f64 {
        let w = self.params.window_size.min(self.history.len());
        if w == 0 {
            return self.current_diff;
        }
        let tail = &self.history[self.history.len() - w..];
        tail.iter().map(|h| h.diff).sum::<f64>() / w as f64
    }

    pub fn attention_failures(&self) -> usize {
        self.attention_ledger.iter().filter(|p| !**p).count()
    }

    pub fn attention_pass_rate(&self) -> Option<f64> {
        let n = self.attention_ledger.len();
        (n > 0).then(|| (n - self.attention_failures()) as f64 / n as f64)
    }

    pub fn should_exclude(&self) -> bool {
        exceeds_failure_limit(self.attention_failures(), self.attention_ledger.len())
    }
}

/// More than 20% of attention checks failed.
pub fn exceeds_failure_limit(failures: usize, total: usize) -> bool {
    total > 0 && failures * 5 > total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendTest {
    pub slope: f64,
    pub f: f64,
    pub p_value: f64,
}

/// OLS of value on position over the window and the F statistic for the
/// slope with (1, n-2) degrees of freedom.
pub fn trend_test(window: &[f64]) -> Result<TrendTest, StaircaseError> {
    let n = window.len();
    if n < 3 {
        return Err(StaircaseError::ShortWindow(n));
    }
    let nf = n as f64;
    let x_mean = (nf - 1.0) / 2.0;
    let y_mean = window.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut sst = 0.0;
    for (i, &y) in window.iter().enumerate() {
        let dx = i as f64 - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        sst += dy * dy;
    }
    let slope = sxy / sxx;
    let mut sse = 0.0;
    for (i, &y) in window.iter().enumerate() {
        let r = y - y_mean - slope * (i as f64 - x_mean);
        sse += r * r;
    }
    let ssr = slope * slope * sxx;
    if sst <= 1e-24 {
        // flat window
        return Ok(TrendTest { slope: 0.0, f: 0.0, p_value: 1.0 });
    }
    if sse <= 1e-12 * sst {
        return Ok(TrendTest { slope, f: f64::INFINITY, p_value: 0.0 });
    }
    let df = nf - 2.0;
    let f = ssr / (sse / df);
    Ok(TrendTest { slope, f, p_value: f_sf(f, 1.0, df) })
}

/// Converged when the slope is not significant at `alpha`.
pub fn check_convergence(window: &[f64], alpha: f64) -> Result<bool, StaircaseError> {
    Ok(trend_test(window)?.p_value > alpha)
}
