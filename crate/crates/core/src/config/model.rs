//! Domain types of the study configuration language.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

pub type Name = String;
/// Opaque key/value payload carried through untouched.
pub type Payload = Map<String, Value>;

/// Prefix marking a component provided by an imported library.
pub const LIBRARY_PREFIX: &str = "lib:";
/// Skip target sentinel that ends the session.
pub const END_TARGET: &str = "end";
/// Block path segment used for a root block without an id.
pub const ROOT_SEGMENT: &str = "root";

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub sequence: Block,
    pub components: BTreeMap<Name, ComponentDef>,
    pub base_components: BTreeMap<Name, ComponentDef>,
    pub imported_libraries: Vec<String>,
    pub study_metadata: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSpec {
    pub strategy: String,
    pub params: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Order {
    Fixed,
    Random,
    LatinSquare,
    Dynamic(DynamicSpec),
}

impl Order {
    pub fn keyword(&self) -> &'static str {
        match self {
            Order::Fixed => "fixed",
            Order::Random => "random",
            Order::LatinSquare => "latinSquare",
            Order::Dynamic(_) => "dynamic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockChild {
    Component(Name),
    Block(Block),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: Option<Name>,
    pub order: Order,
    pub components: Vec<BlockChild>,
    pub num_samples: Option<u64>,
    pub interruptions: Vec<InterruptionSpec>,
    pub skip: Vec<SkipCondition>,
}

impl Block {
    pub fn new(order: Order, components: Vec<BlockChild>) -> Self {
        Block {
            id: None,
            order,
            components,
            num_samples: None,
            interruptions: Vec::new(),
            skip: Vec::new(),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self.order, Order::Dynamic(_))
    }

    /// Number of child units realized after `numSamples` truncation.
    pub fn realized_len(&self) -> usize {
        let n = self.components.len();
        match self.num_samples {
            Some(k) => n.min(k as usize),
            None => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CompType {
    Markdown,
    React,
    Image,
    Website,
    Form,
    Vega,
}

impl CompType {
    pub const ALL: [CompType; 6] = [
        CompType::Markdown,
        CompType::React,
        CompType::Image,
        CompType::Website,
        CompType::Form,
        CompType::Vega,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            CompType::Markdown => "markdown",
            CompType::React => "react",
            CompType::Image => "image",
            CompType::Website => "website",
            CompType::Form => "form",
            CompType::Vega => "vega",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.keyword() == s)
    }
}

/// A component as written. Base components use the same shape with every
/// field optional; resolved components have `base == None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComponentDef {
    pub base: Option<Name>,
    pub comp_type: Option<CompType>,
    pub payload: Payload,
    pub responses: Option<Vec<ResponseDef>>,
    pub correct_answers: Option<BTreeMap<String, Value>>,
}

impl ComponentDef {
    pub fn responses(&self) -> &[ResponseDef] {
        self.responses.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ResponseKind {
    Numerical,
    ShortText,
    LongText,
    Likert,
    Dropdown,
    Slider,
    Radio,
    Checkbox,
    Matrix,
    Reactive,
    Video,
}

impl ResponseKind {
    pub const ALL: [ResponseKind; 11] = [
        ResponseKind::Numerical,
        ResponseKind::ShortText,
        ResponseKind::LongText,
        ResponseKind::Likert,
        ResponseKind::Dropdown,
        ResponseKind::Slider,
        ResponseKind::Radio,
        ResponseKind::Checkbox,
        ResponseKind::Matrix,
        ResponseKind::Reactive,
        ResponseKind::Video,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ResponseKind::Numerical => "numerical",
            ResponseKind::ShortText => "shortText",
            ResponseKind::LongText => "longText",
            ResponseKind::Likert => "likert",
            ResponseKind::Dropdown => "dropdown",
            ResponseKind::Slider => "slider",
            ResponseKind::Radio => "radio",
            ResponseKind::Checkbox => "checkbox",
            ResponseKind::Matrix => "matrix",
            ResponseKind::Reactive => "reactive",
            ResponseKind::Video => "video",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDef {
    pub id: Name,
    pub kind: ResponseKind,
    pub required: bool,
    pub parameters: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Deterministic { first_location: u64, spacing: u64 },
    Random { num_interruptions: u64, min_gap: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterruptionSpec {
    pub placement: Placement,
    pub components: Vec<Name>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipCheck {
    NumCorrect,
    NumIncorrect,
}

impl SkipCheck {
    pub fn keyword(self) -> &'static str {
        match self {
            SkipCheck::NumCorrect => "numCorrect",
            SkipCheck::NumIncorrect => "numIncorrect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Eq,
    Neq,
    Lt,
    Gt,
}

impl Comparator {
    pub fn keyword(self) -> &'static str {
        match self {
            Comparator::Eq => "eq",
            Comparator::Neq => "neq",
            Comparator::Lt => "lt",
            Comparator::Gt => "gt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkipRule {
    /// Counts graded answers in the current realization of `block_id`.
    Block { block_id: Name, check: SkipCheck, threshold: u64 },
    /// Counts graded answers across every realization of `block_id`.
    RepeatedBlock { block_id: Name, check: SkipCheck, threshold: u64 },
    /// Compares the answer just recorded for `component_name`.
    Response { component_name: Name, response_id: Name, comparator: Comparator, value: Value },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipTarget {
    End,
    Name(Name),
}

impl SkipTarget {
    pub fn parse(s: &str) -> Self {
        if s == END_TARGET {
            SkipTarget::End
        } else {
            SkipTarget::Name(s.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            SkipTarget::End => END_TARGET,
            SkipTarget::Name(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipCondition {
    pub rule: SkipRule,
    pub target: SkipTarget,
}

/// A block together with its slash-joined path and its location in the
/// document (for diagnostics).
#[derive(Debug, Clone)]
pub struct BlockRef<'a> {
    pub path: String,
    pub doc_path: String,
    pub block: &'a Block,
}

impl StudyConfig {
    /// Path of the root block: its id, or `root`.
    pub fn root_path(&self) -> String {
        self.sequence.id.clone().unwrap_or_else(|| ROOT_SEGMENT.to_string())
    }

    /// Every block in pre-order. A child block's path is the parent path
    /// plus `/` plus the child's id (or its index among the parent's
    /// components when it has none).
    pub fn blocks(&self) -> Vec<BlockRef<'_>> {
        let mut out = Vec::new();
        collect_blocks(&self.sequence, self.root_path(), "sequence".to_string(), &mut out);
        out
    }

    pub fn block_index(&self) -> BTreeMap<String, &Block> {
        self.blocks().into_iter().map(|b| (b.path, b.block)).collect()
    }

    pub fn is_external(name: &str) -> bool {
        name.starts_with(LIBRARY_PREFIX)
    }
}

fn collect_blocks<'a>(block: &'a Block, path: String, doc_path: String, out: &mut Vec<BlockRef<'a>>) {
    out.push(BlockRef { path: path.clone(), doc_path: doc_path.clone(), block });
    for (i, child) in block.components.iter().enumerate() {
        if let BlockChild::Block(b) = child {
            let seg = child_segment(b, i);
            collect_blocks(b, format!("{path}/{seg}"), format!("{doc_path}.components[{i}]"), out);
        }
    }
}

pub fn child_segment(block: &Block, index: usize) -> String {
    block.id.clone().unwrap_or_else(|| index.to_string())
}

/// Segments of a block path.
pub fn segments(path: &str) -> impl Iterator<Item = &str> {
    path.split('/')
}

/// `path` and each of its ancestors, innermost first.
pub fn enclosing_paths(path: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut end = path.len();
    loop {
        out.push(&path[..end]);
        match path[..end].rfind('/') {
            Some(i) => end = i,
            None => break,
        }
    }
    out
}

pub fn path_within(path: &str, ancestor: &str) -> bool {
    path == ancestor
        || (path.len() > ancestor.len()
            && path.starts_with(ancestor)
            && path.as_bytes()[ancestor.len()] == b'/')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enclosing_innermost_first() {
        assert_eq!(enclosing_paths("root/a/1"), ["root/a/1", "root/a", "root"]);
        assert_eq!(enclosing_paths("root"), ["root"]);
    }

    #[test]
    fn within_respects_segment_boundaries() {
        assert!(path_within("root/a", "root"));
        assert!(path_within("root", "root"));
        assert!(!path_within("rootx/a", "root"));
        assert!(!path_within("root", "root/a"));
    }
}
