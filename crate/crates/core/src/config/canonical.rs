//! Canonical serialization: sorted keys, two-space indentation, LF, a
//! trailing newline. Empty optional collections are omitted.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{json, Map, Value};

use super::model::*;

pub fn to_canonical_value(config: &StudyConfig) -> Value {
    let mut root = Map::new();
    root.insert("sequence".into(), block_value(&config.sequence));
    root.insert(
        "components".into(),
        Value::Object(config.components.iter().map(|(k, c)| (k.clone(), component_value(c))).collect()),
    );
    if !config.base_components.is_empty() {
        root.insert(
            "baseComponents".into(),
            Value::Object(
                config.base_components.iter().map(|(k, c)| (k.clone(), component_value(c))).collect(),
            ),
        );
    }
    if !config.imported_libraries.is_empty() {
        root.insert("importedLibraries".into(), json!(config.imported_libraries));
    }
    if !config.study_metadata.is_empty() {
        root.insert(
            "studyMetadata".into(),
            Value::Object(config.study_metadata.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        );
    }
    Value::Object(root)
}

pub fn to_canonical_string(config: &StudyConfig) -> String {
    // serde_json's default Map is ordered by key, which gives the sorting.
    let mut s = serde_json::to_string_pretty(&to_canonical_value(config))
        .unwrap_or_else(|_| String::new());
    s.push('\n');
    s
}

fn block_value(b: &Block) -> Value {
    let mut m = Map::new();
    if let Some(id) = &b.id {
        m.insert("id".into(), Value::String(id.clone()));
    }
    m.insert("order".into(), Value::String(b.order.keyword().to_string()));
    if let Order::Dynamic(spec) = &b.order {
        let mut s = Map::new();
        s.insert("name".into(), Value::String(spec.strategy.clone()));
        if !spec.params.is_empty() {
            s.insert("params".into(), Value::Object(spec.params.clone()));
        }
        m.insert("strategy".into(), Value::Object(s));
    }
    if !(b.is_dynamic() && b.components.is_empty()) {
        let children: Vec<Value> = b
            .components
            .iter()
            .map(|c| match c {
                BlockChild::Component(n) => Value::String(n.clone()),
                BlockChild::Block(inner) => block_value(inner),
            })
            .collect();
        m.insert("components".into(), Value::Array(children));
    }
    if let Some(n) = b.num_samples {
        m.insert("numSamples".into(), json!(n));
    }
    if !b.interruptions.is_empty() {
        m.insert(
            "interruptions".into(),
            Value::Array(b.interruptions.iter().map(interruption_value).collect()),
        );
    }
    if !b.skip.is_empty() {
        m.insert("skip".into(), Value::Array(b.skip.iter().map(skip_value).collect()));
    }
    Value::Object(m)
}

fn interruption_value(i: &InterruptionSpec) -> Value {
    match i.placement {
        Placement::Deterministic { first_location, spacing } => json!({
            "kind": "deterministic",
            "firstLocation": first_location,
            "spacing": spacing,
            "components": i.components,
        }),
        Placement::Random { num_interruptions, min_gap } => json!({
            "kind": "random",
            "numInterruptions": num_interruptions,
            "minGap": min_gap,
            "components": i.components,
        }),
    }
}

fn skip_value(s: &SkipCondition) -> Value {
    let target = s.target.as_str();
    match &s.rule {
        SkipRule::Block { block_id, check, threshold } => json!({
            "kind": "blockCondition",
            "blockId": block_id,
            "check": check.keyword(),
            "threshold": threshold,
            "target": target,
        }),
        SkipRule::RepeatedBlock { block_id, check, threshold } => json!({
            "kind": "repeatedBlockCondition",
            "blockId": block_id,
            "check": check.keyword(),
            "threshold": threshold,
            "target": target,
        }),
        SkipRule::Response { component_name, response_id, comparator, value } => json!({
            "kind": "responseCondition",
            "componentName": component_name,
            "responseId": response_id,
            "comparator": comparator.keyword(),
            "value": value,
            "target": target,
        }),
    }
}

fn component_value(c: &ComponentDef) -> Value {
    let mut m = Map::new();
    if let Some(b) = &c.base {
        m.insert("base".into(), Value::String(b.clone()));
    }
    if let Some(t) = c.comp_type {
        m.insert("compType".into(), Value::String(t.keyword().to_string()));
    }
    if !c.payload.is_empty() {
        m.insert("payload".into(), Value::Object(c.payload.clone()));
    }
    if let Some(rs) = &c.responses {
        let list: Vec<Value> = rs
            .iter()
            .map(|r| {
                let mut rm = Map::new();
                rm.insert("id".into(), Value::String(r.id.clone()));
                rm.insert("kind".into(), Value::String(r.kind.keyword().to_string()));
                rm.insert("required".into(), Value::Bool(r.required));
                if !r.parameters.is_empty() {
                    rm.insert("parameters".into(), Value::Object(r.parameters.clone()));
                }
                Value::Object(rm)
            })
            .collect();
        m.insert("responses".into(), Value::Array(list));
    }
    if let Some(ca) = &c.correct_answers {
        m.insert(
            "correctAnswers".into(),
            Value::Object(ca.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        );
    }
    Value::Object(m)
}
