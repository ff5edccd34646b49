//! Single-level `baseComponents` inheritance.
//!
//! A child's explicitly set top-level fields win over the base. Payload
//! entries count as top-level fields of the component record and merge
//! key by key; `responses` and `correctAnswers` replace wholesale.

use alloc::collections::BTreeMap;
use alloc::format;

use super::model::*;
use super::{IssueCode, ValidationReport};

pub fn resolve_inheritance(config: &StudyConfig) -> Result<StudyConfig, ValidationReport> {
    let mut report = ValidationReport::default();
    for (name, base) in &config.base_components {
        if let Some(grand) = &base.base {
            report.error(
                IssueCode::BaseChain,
                format!("baseComponents.{name}.base"),
                format!("base component `{name}` names base `{grand}`; inheritance is single-level"),
            );
        }
    }
    let mut components = BTreeMap::new();
    for (name, child) in &config.components {
        let resolved = match &child.base {
            None => child.clone(),
            Some(b) => match config.base_components.get(b) {
                Some(base) => merge(base, child),
                None => {
                    report.error(
                        IssueCode::BaseMissing,
                        format!("components.{name}.base"),
                        format!("base component `{b}` is not defined"),
                    );
                    continue;
                }
            },
        };
        components.insert(name.clone(), resolved);
    }
    if !report.is_ok() {
        return Err(report);
    }
    Ok(StudyConfig { components, ..config.clone() })
}

fn merge(base: &ComponentDef, child: &ComponentDef) -> ComponentDef {
    let mut payload = base.payload.clone();
    for (k, v) in &child.payload {
        payload.insert(k.clone(), v.clone());
    }
    ComponentDef {
        base: None,
        comp_type: child.comp_type.or(base.comp_type),
        payload,
        responses: child.responses.clone().or_else(|| base.responses.clone()),
        correct_answers: child.correct_answers.clone().or_else(|| base.correct_answers.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_study_config, ParseMode};
    use serde_json::json;

    fn parse(s: &str) -> StudyConfig {
        parse_study_config(s, ParseMode::Strict).unwrap()
    }

    #[test]
    fn child_fields_win() {
        let c = parse(
            r#"{"baseComponents":{"B":{"compType":"image","payload":{"path":"x.png","alt":"dots"}}},
                "components":{"child":{"base":"B","payload":{"path":"y.png"}}},
                "sequence":{"order":"fixed","components":["child"]}}"#,
        );
        let r = resolve_inheritance(&c).unwrap();
        let child = &r.components["child"];
        assert_eq!(child.comp_type, Some(CompType::Image));
        assert_eq!(child.payload["path"], json!("y.png"));
        assert_eq!(child.payload["alt"], json!("dots"));
        assert!(child.base.is_none());
    }

    #[test]
    fn responses_replace_wholesale() {
        let c = parse(
            r#"{"baseComponents":{"B":{"compType":"form","responses":[{"id":"a","kind":"likert"},{"id":"b","kind":"likert"}]}},
                "components":{"child":{"base":"B","responses":[{"id":"c","kind":"shortText"}]}},
                "sequence":{"order":"fixed","components":["child"]}}"#,
        );
        let r = resolve_inheritance(&c).unwrap();
        let ids: alloc::vec::Vec<_> = r.components["child"].responses().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["c"]);
    }

    #[test]
    fn missing_base() {
        let c = parse(
            r#"{"components":{"child":{"base":"Q"}},"sequence":{"order":"fixed","components":["child"]}}"#,
        );
        let r = resolve_inheritance(&c).unwrap_err();
        assert_eq!(r.errors[0].code, IssueCode::BaseMissing);
    }

    #[test]
    fn base_chain() {
        let c = parse(
            r#"{"baseComponents":{"A":{"base":"B"},"B":{"compType":"markdown"}},
                "components":{"x":{"base":"B"}},"sequence":{"order":"fixed","components":["x"]}}"#,
        );
        let r = resolve_inheritance(&c).unwrap_err();
        assert_eq!(r.errors[0].code, IssueCode::BaseChain);
    }

    #[test]
    fn idempotent() {
        let c = parse(
            r#"{"baseComponents":{"B":{"compType":"image"}},
                "components":{"x":{"base":"B"},"y":{"compType":"markdown"}},
                "sequence":{"order":"fixed","components":["x","y"]}}"#,
        );
        let once = resolve_inheritance(&c).unwrap();
        assert_eq!(resolve_inheritance(&once).unwrap(), once);
    }
}
