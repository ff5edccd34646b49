//! Strict walker from a JSON document to [`StudyConfig`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

use super::model::*;
use super::{IssueCode, ValidationReport};
use crate::value::is_scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown fields are errors.
    #[default]
    Strict,
    /// Unknown fields are warnings and otherwise ignored.
    Lenient,
}

/// Parses a study document; any error yields the full report instead.
pub fn parse_study_config(text: &str, mode: ParseMode) -> Result<StudyConfig, ValidationReport> {
    match parse_study_config_with_report(text, mode) {
        (Some(c), _) => Ok(c),
        (None, r) => Err(r),
    }
}

/// Like [`parse_study_config`] but also hands back warnings on success.
pub fn parse_study_config_with_report(
    text: &str,
    mode: ParseMode,
) -> (Option<StudyConfig>, ValidationReport) {
    let mut p = Walker { mode, report: ValidationReport::default() };
    let doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            p.report.error(IssueCode::Syntax, "", format!("{e}"));
            return (None, p.report);
        }
    };
    let config = p.study(&doc);
    if p.report.is_ok() {
        (config, p.report)
    } else {
        (None, p.report)
    }
}

fn key(path: &str, k: &str) -> String {
    if path.is_empty() {
        k.to_string()
    } else {
        format!("{path}.{k}")
    }
}

fn idx(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

struct Walker {
    mode: ParseMode,
    report: ValidationReport,
}

impl Walker {
    fn type_error(&mut self, path: &str, want: &str, got: &Value) {
        self.report.error(
            IssueCode::Type,
            path,
            format!("expected {want}, found {}", type_name(got)),
        );
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v {
            Value::Object(m) => Some(m),
            other => {
                self.type_error(path, "object", other);
                None
            }
        }
    }

    fn array<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Vec<Value>> {
        match v {
            Value::Array(a) => Some(a),
            other => {
                self.type_error(path, "array", other);
                None
            }
        }
    }

    fn string(&mut self, v: &Value, path: &str) -> Option<String> {
        match v {
            Value::String(s) => Some(s.clone()),
            other => {
                self.type_error(path, "string", other);
                None
            }
        }
    }

    fn uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v.as_u64() {
            Some(n) => Some(n),
            None => {
                self.type_error(path, "non-negative integer", v);
                None
            }
        }
    }

    fn boolean(&mut self, v: &Value, path: &str) -> Option<bool> {
        match v {
            Value::Bool(b) => Some(*b),
            other => {
                self.type_error(path, "boolean", other);
                None
            }
        }
    }

    fn fields(&mut self, m: &Map<String, Value>, allowed: &[&str], path: &str) {
        for k in m.keys() {
            if allowed.contains(&k.as_str()) {
                continue;
            }
            let msg = format!("unknown field `{k}`");
            match self.mode {
                ParseMode::Strict => self.report.error(IssueCode::UnknownField, key(path, k), msg),
                ParseMode::Lenient => self.report.warn(IssueCode::UnknownField, key(path, k), msg),
            }
        }
    }

    fn required<'v>(&mut self, m: &'v Map<String, Value>, k: &str, path: &str) -> Option<&'v Value> {
        let v = m.get(k);
        if v.is_none() {
            self.report.error(IssueCode::MissingField, key(path, k), format!("missing field `{k}`"));
        }
        v
    }

    fn names(&mut self, v: &Value, path: &str) -> Option<Vec<String>> {
        let arr = self.array(v, path)?;
        let mut out = Vec::with_capacity(arr.len());
        for (i, item) in arr.iter().enumerate() {
            out.push(self.string(item, &idx(path, i))?);
        }
        Some(out)
    }

    fn study(&mut self, v: &Value) -> Option<StudyConfig> {
        let m = self.object(v, "")?;
        self.fields(
            m,
            &["sequence", "components", "baseComponents", "importedLibraries", "studyMetadata"],
            "",
        );
        let sequence = self.required(m, "sequence", "").and_then(|s| self.block(s, "sequence"));
        let components = self
            .required(m, "components", "")
            .and_then(|c| self.component_map(c, "components"));
        let base_components = match m.get("baseComponents") {
            Some(b) => self.component_map(b, "baseComponents"),
            None => Some(BTreeMap::new()),
        };
        let imported_libraries = match m.get("importedLibraries") {
            Some(l) => self.names(l, "importedLibraries"),
            None => Some(Vec::new()),
        };
        let study_metadata = match m.get("studyMetadata") {
            Some(md) => self.metadata(md, "studyMetadata"),
            None => Some(BTreeMap::new()),
        };
        Some(StudyConfig {
            sequence: sequence?,
            components: components?,
            base_components: base_components?,
            imported_libraries: imported_libraries?,
            study_metadata: study_metadata?,
        })
    }

    fn metadata(&mut self, v: &Value, path: &str) -> Option<BTreeMap<String, Value>> {
        let m = self.object(v, path)?;
        let mut out = BTreeMap::new();
        let mut ok = true;
        for (k, val) in m {
            if is_scalar(val) {
                out.insert(k.clone(), val.clone());
            } else {
                self.type_error(&key(path, k), "scalar", val);
                ok = false;
            }
        }
        ok.then_some(out)
    }

    fn component_map(&mut self, v: &Value, path: &str) -> Option<BTreeMap<Name, ComponentDef>> {
        let m = self.object(v, path)?;
        let mut out = BTreeMap::new();
        let mut ok = true;
        for (name, def) in m {
            match self.component(def, &key(path, name)) {
                Some(c) => {
                    out.insert(name.clone(), c);
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn component(&mut self, v: &Value, path: &str) -> Option<ComponentDef> {
        let m = self.object(v, path)?;
        self.fields(m, &["base", "compType", "payload", "responses", "correctAnswers"], path);
        let mut ok = true;
        let mut def = ComponentDef::default();
        if let Some(b) = m.get("base") {
            def.base = self.string(b, &key(path, "base"));
            ok &= def.base.is_some();
        }
        if let Some(t) = m.get("compType") {
            let p = key(path, "compType");
            match self.string(t, &p) {
                Some(s) => match CompType::from_keyword(&s) {
                    Some(ct) => def.comp_type = Some(ct),
                    None => {
                        self.report.error(
                            IssueCode::UnknownCompType,
                            p,
                            format!("unknown component type `{s}`"),
                        );
                        ok = false;
                    }
                },
                None => ok = false,
            }
        }
        if let Some(pl) = m.get("payload") {
            match self.object(pl, &key(path, "payload")) {
                Some(obj) => def.payload = obj.clone(),
                None => ok = false,
            }
        }
        if let Some(rs) = m.get("responses") {
            let p = key(path, "responses");
            match self.array(rs, &p) {
                Some(arr) => {
                    let mut responses = Vec::with_capacity(arr.len());
                    for (i, r) in arr.iter().enumerate() {
                        match self.response(r, &idx(&p, i)) {
                            Some(r) => responses.push(r),
                            None => ok = false,
                        }
                    }
                    def.responses = Some(responses);
                }
                None => ok = false,
            }
        }
        if let Some(ca) = m.get("correctAnswers") {
            match self.metadata(ca, &key(path, "correctAnswers")) {
                Some(map) => def.correct_answers = Some(map),
                None => ok = false,
            }
        }
        ok.then_some(def)
    }

    fn response(&mut self, v: &Value, path: &str) -> Option<ResponseDef> {
        let m = self.object(v, path)?;
        self.fields(m, &["id", "kind", "required", "parameters"], path);
        let id = self.required(m, "id", path).and_then(|x| self.string(x, &key(path, "id")));
        let kind = self.required(m, "kind", path).and_then(|x| {
            let p = key(path, "kind");
            let s = self.string(x, &p)?;
            let k = ResponseKind::from_keyword(&s);
            if k.is_none() {
                self.report.error(
                    IssueCode::UnknownResponseKind,
                    p,
                    format!("unknown response kind `{s}`"),
                );
            }
            k
        });
        let required = match m.get("required") {
            Some(r) => self.boolean(r, &key(path, "required")),
            None => Some(false),
        };
        let parameters = match m.get("parameters") {
            Some(p) => self.object(p, &key(path, "parameters")).cloned(),
            None => Some(Map::new()),
        };
        Some(ResponseDef { id: id?, kind: kind?, required: required?, parameters: parameters? })
    }

    fn block(&mut self, v: &Value, path: &str) -> Option<Block> {
        let m = self.object(v, path)?;
        self.fields(
            m,
            &["id", "order", "components", "numSamples", "interruptions", "skip", "strategy"],
            path,
        );
        let mut ok = true;
        let id = match m.get("id") {
            Some(i) => {
                let s = self.string(i, &key(path, "id"));
                ok &= s.is_some();
                s
            }
            None => None,
        };
        let order = self.required(m, "order", path).and_then(|o| {
            let p = key(path, "order");
            let s = self.string(o, &p)?;
            match s.as_str() {
                "fixed" => Some(Order::Fixed),
                "random" => Some(Order::Random),
                "latinSquare" => Some(Order::LatinSquare),
                "dynamic" => {
                    let spec = self
                        .required(m, "strategy", path)
                        .and_then(|st| self.strategy(st, &key(path, "strategy")))?;
                    Some(Order::Dynamic(spec))
                }
                other => {
                    self.report.error(IssueCode::UnknownVariant, p, format!("unknown order `{other}`"));
                    None
                }
            }
        });
        if m.contains_key("strategy") && !matches!(order, Some(Order::Dynamic(_)) | None) {
            self.report.error(
                IssueCode::UnknownField,
                key(path, "strategy"),
                "`strategy` is only allowed on dynamic blocks",
            );
            ok = false;
        }
        let mut components = Vec::new();
        match m.get("components") {
            Some(c) => {
                let p = key(path, "components");
                match self.array(c, &p) {
                    Some(arr) => {
                        for (i, child) in arr.iter().enumerate() {
                            let cp = idx(&p, i);
                            match child {
                                Value::String(s) => components.push(BlockChild::Component(s.clone())),
                                Value::Object(_) => match self.block(child, &cp) {
                                    Some(b) => components.push(BlockChild::Block(b)),
                                    None => ok = false,
                                },
                                other => {
                                    self.type_error(&cp, "component name or block", other);
                                    ok = false;
                                }
                            }
                        }
                    }
                    None => ok = false,
                }
            }
            None => {
                if !matches!(order, Some(Order::Dynamic(_))) {
                    self.report.error(
                        IssueCode::MissingField,
                        key(path, "components"),
                        "missing field `components`",
                    );
                    ok = false;
                }
            }
        }
        let num_samples = match m.get("numSamples") {
            Some(n) => {
                let v = self.uint(n, &key(path, "numSamples"));
                ok &= v.is_some();
                v
            }
            None => None,
        };
        let mut interruptions = Vec::new();
        if let Some(list) = m.get("interruptions") {
            let p = key(path, "interruptions");
            match self.array(list, &p) {
                Some(arr) => {
                    for (i, it) in arr.iter().enumerate() {
                        match self.interruption(it, &idx(&p, i)) {
                            Some(x) => interruptions.push(x),
                            None => ok = false,
                        }
                    }
                }
                None => ok = false,
            }
        }
        let mut skip = Vec::new();
        if let Some(list) = m.get("skip") {
            let p = key(path, "skip");
            match self.array(list, &p) {
                Some(arr) => {
                    for (i, it) in arr.iter().enumerate() {
                        match self.skip(it, &idx(&p, i)) {
                            Some(x) => skip.push(x),
                            None => ok = false,
                        }
                    }
                }
                None => ok = false,
            }
        }
        let order = order?;
        ok.then_some(Block { id, order, components, num_samples, interruptions, skip })
    }

    fn strategy(&mut self, v: &Value, path: &str) -> Option<DynamicSpec> {
        let m = self.object(v, path)?;
        self.fields(m, &["name", "params"], path);
        let name = self.required(m, "name", path).and_then(|n| self.string(n, &key(path, "name")));
        let params = match m.get("params") {
            Some(p) => self.object(p, &key(path, "params")).cloned(),
            None => Some(Map::new()),
        };
        Some(DynamicSpec { strategy: name?, params: params? })
    }

    fn interruption(&mut self, v: &Value, path: &str) -> Option<InterruptionSpec> {
        let m = self.object(v, path)?;
        let kind = self.required(m, "kind", path).and_then(|k| self.string(k, &key(path, "kind")))?;
        let components = self
            .required(m, "components", path)
            .and_then(|c| self.names(c, &key(path, "components")));
        let placement = match kind.as_str() {
            "deterministic" => {
                self.fields(m, &["kind", "components", "firstLocation", "spacing"], path);
                let first = self
                    .required(m, "firstLocation", path)
                    .and_then(|x| self.uint(x, &key(path, "firstLocation")));
                let spacing = self
                    .required(m, "spacing", path)
                    .and_then(|x| self.uint(x, &key(path, "spacing")));
                Placement::Deterministic { first_location: first?, spacing: spacing? }
            }
            "random" => {
                self.fields(m, &["kind", "components", "numInterruptions", "minGap"], path);
                let count = self
                    .required(m, "numInterruptions", path)
                    .and_then(|x| self.uint(x, &key(path, "numInterruptions")));
                let min_gap = match m.get("minGap") {
                    Some(g) => self.uint(g, &key(path, "minGap")),
                    None => Some(0),
                };
                Placement::Random { num_interruptions: count?, min_gap: min_gap? }
            }
            other => {
                self.report.error(
                    IssueCode::UnknownVariant,
                    key(path, "kind"),
                    format!("unknown interruption kind `{other}`"),
                );
                return None;
            }
        };
        Some(InterruptionSpec { placement, components: components? })
    }

    fn skip(&mut self, v: &Value, path: &str) -> Option<SkipCondition> {
        let m = self.object(v, path)?;
        let kind = self.required(m, "kind", path).and_then(|k| self.string(k, &key(path, "kind")))?;
        let target = self
            .required(m, "target", path)
            .and_then(|t| self.string(t, &key(path, "target")))
            .map(|t| SkipTarget::parse(&t));
        let rule = match kind.as_str() {
            "blockCondition" | "repeatedBlockCondition" => {
                self.fields(m, &["kind", "blockId", "check", "threshold", "target"], path);
                let block_id = self
                    .required(m, "blockId", path)
                    .and_then(|b| self.string(b, &key(path, "blockId")));
                let check = self.required(m, "check", path).and_then(|c| {
                    let p = key(path, "check");
                    match self.string(c, &p)?.as_str() {
                        "numCorrect" => Some(SkipCheck::NumCorrect),
                        "numIncorrect" => Some(SkipCheck::NumIncorrect),
                        other => {
                            self.report.error(IssueCode::UnknownVariant, p, format!("unknown check `{other}`"));
                            None
                        }
                    }
                });
                let threshold = self
                    .required(m, "threshold", path)
                    .and_then(|t| self.uint(t, &key(path, "threshold")));
                let (block_id, check, threshold) = (block_id?, check?, threshold?);
                if kind == "blockCondition" {
                    SkipRule::Block { block_id, check, threshold }
                } else {
                    SkipRule::RepeatedBlock { block_id, check, threshold }
                }
            }
            "responseCondition" => {
                self.fields(
                    m,
                    &["kind", "componentName", "responseId", "comparator", "value", "target"],
                    path,
                );
                let component_name = self
                    .required(m, "componentName", path)
                    .and_then(|c| self.string(c, &key(path, "componentName")));
                let response_id = self
                    .required(m, "responseId", path)
                    .and_then(|c| self.string(c, &key(path, "responseId")));
                let comparator = self.required(m, "comparator", path).and_then(|c| {
                    let p = key(path, "comparator");
                    match self.string(c, &p)?.as_str() {
                        "eq" => Some(Comparator::Eq),
                        "neq" => Some(Comparator::Neq),
                        "lt" => Some(Comparator::Lt),
                        "gt" => Some(Comparator::Gt),
                        other => {
                            self.report.error(
                                IssueCode::UnknownVariant,
                                p,
                                format!("unknown comparator `{other}`"),
                            );
                            None
                        }
                    }
                });
                let value = self.required(m, "value", path).and_then(|val| {
                    if is_scalar(val) {
                        Some(val.clone())
                    } else {
                        self.type_error(&key(path, "value"), "scalar", val);
                        None
                    }
                });
                SkipRule::Response {
                    component_name: component_name?,
                    response_id: response_id?,
                    comparator: comparator?,
                    value: value?,
                }
            }
            other => {
                self.report.error(
                    IssueCode::UnknownVariant,
                    key(path, "kind"),
                    format!("unknown skip condition `{other}`"),
                );
                return None;
            }
        };
        Some(SkipCondition { rule, target: target? })
    }
}
