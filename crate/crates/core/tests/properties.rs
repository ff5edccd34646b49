//! Cross-module properties over the public API.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use studyspec_core::config::{check_document, to_canonical_string, ParseMode, StudyConfig};
use studyspec_core::latin::LatinSquare;
use studyspec_core::runtime::{Next, Session, SessionStatus};
use studyspec_core::sequence::{implicit_assignments, realize_sequence};
use studyspec_core::staircase::{staircase_init, Approach, LastResponse, Side, StaircaseParams, Step};

const STUDY: &str = r#"{
  "components": {
    "consent": {"compType": "form", "responses": [{"id": "ok", "kind": "radio", "required": true}]},
    "a": {"compType": "form", "responses": [{"id": "x", "kind": "radio"}], "correctAnswers": {"x": "1"}},
    "b": {"compType": "markdown"}, "c": {"compType": "markdown"}, "d": {"compType": "markdown"},
    "pause": {"compType": "markdown"},
    "trial": {"compType": "image", "responses": [{"id": "choice", "kind": "radio"}]},
    "bye": {"compType": "markdown"}
  },
  "sequence": {"order": "fixed", "components": [
    "consent",
    {"id": "latin", "order": "latinSquare", "components": ["a", "b", "c"]},
    {"id": "rand", "order": "random", "numSamples": 3, "components": ["b", "c", "d", "a"],
     "interruptions": [{"kind": "random", "numInterruptions": 2, "minGap": 1, "components": ["pause"]}],
     "skip": [{"kind": "blockCondition", "blockId": "rand", "check": "numIncorrect", "threshold": 1, "target": "bye"}]},
    {"id": "stair", "order": "dynamic", "strategy": {"name": "staircase",
      "params": {"baseR": 0.6, "approach": "below", "startDiff": 0.2, "maxTrials": 30, "windowSize": 12}},
     "components": ["trial"]},
    "bye"
  ]}
}"#;

fn study() -> StudyConfig {
    let out = check_document(STUDY, ParseMode::Strict);
    assert!(out.report.is_ok(), "{:?}", out.report);
    out.config.unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn squares_are_latin(n in 1usize..13, seed in any::<u64>()) {
        let sq = LatinSquare::build(n, seed).unwrap();
        prop_assert!(sq.is_latin());
        prop_assert_eq!(sq.rows.len(), n);
    }

    #[test]
    fn realization_is_deterministic_and_well_formed(index in 0u64..1000, seed in any::<u64>()) {
        let cfg = study();
        let rows = implicit_assignments(&cfg, index, seed);
        let s1 = realize_sequence(&cfg, index, seed, &rows).unwrap();
        let s2 = realize_sequence(&cfg, index, seed, &rows).unwrap();
        prop_assert_eq!(&s1, &s2);

        prop_assert_eq!(&s1.block_orders["root/latin"], &rows["root/latin"]);
        let rand_order = &s1.block_orders["root/rand"];
        prop_assert_eq!(rand_order.len(), 3);
        prop_assert_eq!(rand_order.iter().collect::<BTreeSet<_>>().len(), 3);

        let ids: BTreeSet<&str> = s1.items.iter().map(|i| i.instance_id.as_str()).collect();
        prop_assert_eq!(ids.len(), s1.items.len());
        let pauses = s1.items.iter().filter(|i| i.is_interruption).count();
        prop_assert_eq!(pauses, 2);
        prop_assert_eq!(s1.items.iter().filter(|i| i.dynamic).count(), 1);
    }

    #[test]
    fn sessions_serve_in_order_and_end(index in 0u64..200, seed in any::<u64>(), answers in any::<u64>()) {
        let cfg = study();
        let rows = implicit_assignments(&cfg, index, seed);
        let realized = realize_sequence(&cfg, index, seed, &rows).unwrap();
        let static_ids: Vec<String> = realized.items.iter().filter(|i| !i.dynamic).map(|i| i.instance_id.clone()).collect();
        let mut session = Session::start(&cfg, realized).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(answers);
        let mut t = 0;
        let mut served = 0;
        while let Next::Serve(s) = session.next_component().unwrap() {
            let mut r = Map::new();
            for resp in cfg.components[&s.component_name].responses() {
                let v = if resp.id == "choice" {
                    Value::from(if rng.gen_bool(0.5) { "left" } else { "right" })
                } else {
                    Value::from(if rng.gen_bool(0.7) { "1" } else { "2" })
                };
                r.insert(resp.id.clone(), v);
            }
            session.submit_answer(r, t, t + 10).unwrap();
            t += 10;
            served += 1;
            prop_assert!(served < 1000);
        }
        prop_assert!(session.status() != SessionStatus::Active);
        let records = session.answers();
        prop_assert_eq!(records.len(), served);
        prop_assert!(records.windows(2).all(|w| w[0].ended_at <= w[1].started_at));

        // static components appear in realized order; skipped ones are absent
        let seen: Vec<&str> = records.iter().map(|r| r.instance_id.as_str()).filter(|id| !id.contains("#t")).collect();
        let mut pos = 0;
        for id in seen {
            let found = static_ids[pos..].iter().position(|s| s == id);
            prop_assert!(found.is_some(), "{} out of order", id);
            pos += found.unwrap() + 1;
        }
        prop_assert_eq!(records.last().unwrap().component_name.as_str(), "bye");
    }

    #[test]
    fn staircase_stays_in_range(seed in any::<u64>(), answers in prop::collection::vec(any::<bool>(), 60)) {
        let params = StaircaseParams::new(0.6, Approach::Below, 0.2);
        let max = params.max_diff();
        let mut st = staircase_init(params.clone(), seed).unwrap();
        let mut last: Option<LastResponse> = None;
        let mut prev_selection: Option<Side> = None;
        let mut i = 0;
        loop {
            match st.next(last).unwrap() {
                Step::Stop(_) => break,
                Step::Trial(tr) => {
                    if tr.is_attention_check {
                        prop_assert_eq!(tr.trial_index % params.attention_every, 0);
                        if let Some(prev) = prev_selection {
                            prop_assert_eq!(tr.correct_side, prev.opposite());
                        }
                    } else {
                        let d = tr.difference();
                        prop_assert!(d >= params.step_down - 1e-9 && d <= max + 1e-9, "diff {}", d);
                    }
                    let pick = if answers[i % answers.len()] { tr.correct_side } else { tr.correct_side.opposite() };
                    i += 1;
                    prev_selection = Some(pick);
                    last = Some(LastResponse { selected_side: pick, correct: pick == tr.correct_side });
                }
            }
        }
        prop_assert!(st.history.len() <= params.max_trials);
        prop_assert!(st.terminated.is_some());
    }
}

#[test]
fn canonical_form_is_a_fixed_point() {
    let cfg = study();
    let once = to_canonical_string(&cfg);
    let again = check_document(&once, ParseMode::Strict).config.unwrap();
    assert_eq!(to_canonical_string(&again), once);
    assert_eq!(again, cfg);
}
