//! Participant event logs: validation, timelines and dwell analytics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::seed;

/// Default dwell exclusion threshold in milliseconds.
pub const DWELL_THRESHOLD_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    ComponentStart,
    ComponentEnd,
    HoverEnter,
    HoverExit,
    Click,
    Keypress,
    SearchQuery,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProvenanceEvent {
    pub t: u64,
    pub kind: EventKind,
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub payload: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_highlighted: Option<bool>,
}

impl ProvenanceEvent {
    pub fn new(t: u64, kind: EventKind, instance_id: impl Into<String>) -> Self {
        ProvenanceEvent {
            t,
            kind,
            instance_id: instance_id.into(),
            item_id: None,
            payload: Map::new(),
            search_highlighted: None,
        }
    }

    pub fn item(mut self, item: impl Into<String>) -> Self {
        self.item_id = Some(item.into());
        self
    }

    pub fn highlighted(mut self, on: bool) -> Self {
        self.search_highlighted = Some(on);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProvenanceError {
    #[error("E_PARSE: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("E_INVALID_LOG: {} finding(s), first: {}", .0.len(), .0.first().map(|f| f.code).unwrap_or(""))]
    InvalidLog(Vec<LogFinding>),
}

impl ProvenanceError {
    pub fn code(&self) -> &'static str {
        match self {
            ProvenanceError::Parse { .. } => "E_PARSE",
            ProvenanceError::InvalidLog(_) => "E_INVALID_LOG",
        }
    }
}

/// Parses a JSON Lines log. Blank lines are ignored; `line` is 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<ProvenanceEvent>, ProvenanceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(line)
            .map_err(|e| ProvenanceError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(ev);
    }
    Ok(out)
}

pub fn to_jsonl(events: &[ProvenanceEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub const NON_MONOTONIC: &str = "NON_MONOTONIC";
pub const UNMATCHED_EXIT: &str = "UNMATCHED_EXIT";
pub const UNMATCHED_END: &str = "UNMATCHED_END";
pub const UNMATCHED_START: &str = "UNMATCHED_START";
pub const OVERLAPPING_COMPONENT: &str = "OVERLAPPING_COMPONENT";
pub const OUTSIDE_COMPONENT: &str = "OUTSIDE_COMPONENT";
pub const SAME_ITEM_OVERLAP: &str = "SAME_ITEM_OVERLAP";
pub const MISSING_ITEM: &str = "MISSING_ITEM";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogFinding {
    pub code: &'static str,
    /// 0-based event index.
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LogReport {
    pub findings: Vec<LogFinding>,
}

impl LogReport {
    pub fn is_replayable(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks ordering and pairing. Hovers left open at `componentEnd` are
/// allowed; they close there.
pub fn validate_log(events: &[ProvenanceEvent]) -> LogReport {
    let mut findings = Vec::new();
    let mut flag = |code, index, message: String| findings.push(LogFinding { code, index, message });
    let mut open: Option<(usize, &str)> = None;
    let mut hovers: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, ev) in events.iter().enumerate() {
        if i > 0 && ev.t < events[i - 1].t {
            flag(NON_MONOTONIC, i, format!("t={} follows t={}", ev.t, events[i - 1].t));
        }
        match ev.kind {
            EventKind::ComponentStart => {
                if let Some((_, id)) = open {
                    flag(OVERLAPPING_COMPONENT, i, format!("`{}` starts while `{id}` is open", ev.instance_id));
                }
                open = Some((i, &ev.instance_id));
                hovers.clear();
            }
            EventKind::ComponentEnd => match open {
                Some((_, id)) if id == ev.instance_id => {
                    open = None;
                    hovers.clear();
                }
                _ => flag(UNMATCHED_END, i, format!("`{}` ends without a start", ev.instance_id)),
            },
            kind => {
                if !matches!(open, Some((_, id)) if id == ev.instance_id) {
                    flag(OUTSIDE_COMPONENT, i, format!("event outside component `{}`", ev.instance_id));
                }
                if matches!(kind, EventKind::HoverEnter | EventKind::HoverExit) {
                    let Some(item) = ev.item_id.as_deref() else {
                        flag(MISSING_ITEM, i, "hover event without itemId".into());
                        continue;
                    };
                    if kind == EventKind::HoverEnter {
                        if hovers.insert(item, i).is_some() {
                            flag(SAME_ITEM_OVERLAP, i, format!("`{item}` entered twice"));
                        }
                    } else if hovers.remove(item).is_none() {
                        flag(UNMATCHED_EXIT, i, format!("`{item}` exited without an enter"));
                    }
                }
            }
        }
    }
    if let Some((i, id)) = open {
        flag(UNMATCHED_START, i, format!("`{id}` never ends"));
    }
    LogReport { findings }
}

fn require_valid(events: &[ProvenanceEvent]) -> Result<(), ProvenanceError> {
    let r = validate_log(events);
    if r.is_replayable() {
        Ok(())
    } else {
        Err(ProvenanceError::InvalidLog(r.findings))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Interval {
    pub instance_id: String,
    pub start: u64,
    pub end: u64,
    pub duration: u64,
    /// Events strictly between the start and end markers.
    pub event_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timeline {
    pub intervals: Vec<Interval>,
    /// Last end minus first start; 0 for an empty log.
    pub total_duration: u64,
}

pub fn reconstruct_timeline(events: &[ProvenanceEvent]) -> Result<Timeline, ProvenanceError> {
    require_valid(events)?;
    let mut intervals = Vec::new();
    let mut current: Option<Interval> = None;
    for ev in events {
        match ev.kind {
            EventKind::ComponentStart => {
                current = Some(Interval {
                    instance_id: ev.instance_id.clone(),
                    start: ev.t,
                    end: ev.t,
                    duration: 0,
                    event_count: 0,
                })
            }
            EventKind::ComponentEnd => {
                let mut iv = current.take().expect("validated");
                iv.end = ev.t;
                iv.duration = ev.t - iv.start;
                intervals.push(iv);
            }
            _ => current.as_mut().expect("validated").event_count += 1,
        }
    }
    let total_duration = match (intervals.first(), intervals.last()) {
        (Some(a), Some(b)) => b.end - a.start,
        _ => 0,
    };
    Ok(Timeline { intervals, total_duration })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemDwell {
    pub total_dwell: u64,
    pub visits: u64,
    pub search_dwell: u64,
    pub non_search_dwell: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DwellReport {
    pub items: BTreeMap<String, ItemDwell>,
    /// Largest per-item total dwell; 0 with no hovers.
    pub max_dwell: u64,
}

impl DwellReport {
    fn add(&mut self, item: &str, span: u64, search: bool) {
        let d = self.items.entry(item.to_string()).or_default();
        d.total_dwell += span;
        d.visits += 1;
        if search {
            d.search_dwell += span;
        } else {
            d.non_search_dwell += span;
        }
        self.max_dwell = self.max_dwell.max(d.total_dwell);
    }
}

/// Hover dwell per item within one component instance.
pub fn dwell_per_item(events: &[ProvenanceEvent], instance_id: &str) -> Result<DwellReport, ProvenanceError> {
    require_valid(events)?;
    Ok(dwell_where(events, |id| id == instance_id))
}

/// Hover dwell per item summed over every component in the log.
pub fn dwell_log(events: &[ProvenanceEvent]) -> Result<DwellReport, ProvenanceError> {
    require_valid(events)?;
    Ok(dwell_where(events, |_| true))
}

fn dwell_where(events: &[ProvenanceEvent], mut include: impl FnMut(&str) -> bool) -> DwellReport {
    let mut report = DwellReport::default();
    let mut open: BTreeMap<&str, (u64, bool)> = BTreeMap::new();
    for ev in events.iter().filter(|e| include(&e.instance_id)) {
        match ev.kind {
            EventKind::HoverEnter => {
                let item = ev.item_id.as_deref().expect("validated");
                open.insert(item, (ev.t, ev.search_highlighted.unwrap_or(false)));
            }
            EventKind::HoverExit => {
                let item = ev.item_id.as_deref().expect("validated");
                let (t0, search) = open.remove(item).expect("validated");
                report.add(item, ev.t - t0, search);
            }
            EventKind::ComponentEnd => {
                for (item, (t0, search)) in core::mem::take(&mut open) {
                    report.add(item, ev.t - t0, search);
                }
            }
            _ => {}
        }
    }
    report
}

/// Participants whose `max_dwell` is strictly above `threshold_ms`, in id
/// order.
pub fn exclude_by_dwell(participants: &BTreeMap<String, DwellReport>, threshold_ms: u64) -> Vec<String> {
    participants
        .iter()
        .filter(|(_, r)| r.max_dwell > threshold_ms)
        .map(|(id, _)| id.clone())
        .collect()
}

/// Item identifiers used by [`synthesize_log`].
pub const SYNTHETIC_ITEMS: [&str; 5] = ["mark0", "mark1", "mark2", "mark3", "mark4"];

/// Builds a valid log for a list of `(instanceId, start, end)` intervals:
/// each interval gets a few non-overlapping hovers over
/// [`SYNTHETIC_ITEMS`], interleaved clicks and, sometimes, a hover left
/// open until the component ends.
pub fn synthesize_log(intervals: &[(String, u64, u64)], seed: u64) -> Vec<ProvenanceEvent> {
    let mut rng = seed::stream(seed);
    let mut out = Vec::new();
    for (id, start, end) in intervals {
        let (start, end) = (*start, (*end).max(*start));
        out.push(ProvenanceEvent::new(start, EventKind::ComponentStart, id.as_str()));
        let mut t = start;
        let hovers = seed::below(&mut rng, 4);
        for h in 0..hovers {
            let room = end - t;
            if room < 2 {
                break;
            }
            let enter = t + seed::below(&mut rng, room / 2);
            let exit = enter + 1 + seed::below(&mut rng, (end - enter).max(1));
            let exit = exit.min(end);
            let item = SYNTHETIC_ITEMS[seed::below(&mut rng, SYNTHETIC_ITEMS.len() as u64) as usize];
            let search = seed::coin(&mut rng);
            out.push(ProvenanceEvent::new(enter, EventKind::HoverEnter, id.as_str()).item(item).highlighted(search));
            if seed::coin(&mut rng) {
                out.push(ProvenanceEvent::new(enter, EventKind::Click, id.as_str()).item(item));
            }
            let last = h + 1 == hovers;
            if last && seed::below(&mut rng, 4) == 0 {
                // left open; closes at componentEnd
                break;
            }
            out.push(ProvenanceEvent::new(exit, EventKind::HoverExit, id.as_str()).item(item));
            t = exit;
        }
        out.push(ProvenanceEvent::new(end, EventKind::ComponentEnd, id.as_str()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ev(t: u64, kind: EventKind) -> ProvenanceEvent {
        ProvenanceEvent::new(t, kind, "c")
    }

    fn hover(t: u64, kind: EventKind, item: &str) -> ProvenanceEvent {
        ev(t, kind).item(item)
    }

    use EventKind::*;

    #[test]
    fn single_span() {
        let log = vec![
            ev(0, ComponentStart),
            hover(1000, HoverEnter, "A"),
            hover(3500, HoverExit, "A"),
            ev(4000, ComponentEnd),
        ];
        assert!(validate_log(&log).is_replayable());
        let d = dwell_per_item(&log, "c").unwrap();
        assert_eq!(d.items["A"].total_dwell, 2500);
        assert_eq!(d.max_dwell, 2500);
    }

    #[test]
    fn findings() {
        let log = vec![ev(0, ComponentStart), hover(5, HoverExit, "A"), ev(3, ComponentEnd)];
        let codes: Vec<_> = validate_log(&log).findings.iter().map(|f| f.code).collect();
        assert_eq!(codes, [UNMATCHED_EXIT, NON_MONOTONIC]);
        let log = vec![ev(0, Click)];
        assert_eq!(validate_log(&log).findings[0].code, OUTSIDE_COMPONENT);
        let log = vec![ev(0, ComponentStart)];
        assert_eq!(validate_log(&log).findings[0].code, UNMATCHED_START);
        let log = vec![ev(0, ComponentEnd)];
        assert_eq!(validate_log(&log).findings[0].code, UNMATCHED_END);
        let log = vec![ev(0, ComponentStart), hover(1, HoverEnter, "A"), hover(2, HoverEnter, "A")];
        assert!(validate_log(&log).findings.iter().any(|f| f.code == SAME_ITEM_OVERLAP));
        assert!(matches!(reconstruct_timeline(&log), Err(ProvenanceError::InvalidLog(_))));
    }

    #[test]
    fn timeline_arithmetic() {
        let log = vec![
            ProvenanceEvent::new(1000, ComponentStart, "a"),
            ProvenanceEvent::new(4000, ComponentEnd, "a"),
            ProvenanceEvent::new(4000, ComponentStart, "b"),
            ProvenanceEvent::new(5000, Keypress, "b"),
            ProvenanceEvent::new(9000, ComponentEnd, "b"),
        ];
        let tl = reconstruct_timeline(&log).unwrap();
        let d: Vec<u64> = tl.intervals.iter().map(|i| i.duration).collect();
        assert_eq!(d, [3000, 5000]);
        assert_eq!(tl.intervals[0].event_count, 0);
        assert_eq!(tl.intervals[1].event_count, 1);
        assert_eq!(tl.total_duration, 8000);
    }

    #[test]
    fn visits_search_and_unclosed() {
        let log = vec![
            ev(0, ComponentStart),
            hover(0, HoverEnter, "A"),
            hover(300, HoverExit, "A"),
            hover(400, HoverEnter, "A"),
            hover(800, HoverExit, "A"),
            hover(1000, HoverEnter, "B").highlighted(true),
            hover(8000, HoverExit, "B"),
            hover(8000, HoverEnter, "B").highlighted(false),
            hover(10900, HoverExit, "B"),
            hover(11000, HoverEnter, "C"),
            ev(11200, ComponentEnd),
        ];
        let d = dwell_per_item(&log, "c").unwrap();
        assert_eq!((d.items["A"].total_dwell, d.items["A"].visits), (700, 2));
        assert_eq!((d.items["B"].search_dwell, d.items["B"].non_search_dwell), (7000, 2900));
        assert_eq!(d.items["C"].total_dwell, 200);
        assert_eq!(d.max_dwell, 9900);
    }

    #[test]
    fn dwell_threshold_is_strict() {
        let mut m = BTreeMap::new();
        for (id, max) in [("p450", 450), ("p500", 500), ("p501", 501)] {
            m.insert(id.to_string(), DwellReport { items: BTreeMap::new(), max_dwell: max });
        }
        assert_eq!(exclude_by_dwell(&m, DWELL_THRESHOLD_MS), ["p501"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let log = synthesize_log(&[("a".into(), 0, 5000), ("b".into(), 5000, 9000)], 3);
        let text = to_jsonl(&log);
        assert_eq!(parse_jsonl(&text).unwrap(), log);
        assert!(matches!(parse_jsonl("{\"t\":1}\n"), Err(ProvenanceError::Parse { line: 1, .. })));
    }

    // single-pass oracle: sum durations between matching start/end markers
    fn oracle_total(events: &[ProvenanceEvent]) -> (u64, usize) {
        let mut sum = 0;
        let mut n = 0;
        let mut start = None;
        for e in events {
            match e.kind {
                ComponentStart => start = Some(e.t),
                ComponentEnd => {
                    sum += e.t - start.take().unwrap();
                    n += 1;
                }
                _ => {}
            }
        }
        (sum, n)
    }

    proptest! {
        #[test]
        fn synthetic_logs_validate(seed in any::<u64>(), k in 1usize..20) {
            let intervals: Vec<(String, u64, u64)> =
                (0..k).map(|i| (format!("c{i}"), i as u64 * 1000, i as u64 * 1000 + 900)).collect();
            let log = synthesize_log(&intervals, seed);
            prop_assert!(validate_log(&log).is_replayable());
            let tl = reconstruct_timeline(&log).unwrap();
            let (sum, n) = oracle_total(&log);
            prop_assert_eq!(tl.intervals.len(), n);
            prop_assert_eq!(tl.intervals.iter().map(|i| i.duration).sum::<u64>(), sum);
            prop_assert!(sum <= tl.total_duration);
        }
    }
}
