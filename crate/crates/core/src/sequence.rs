//! Per-participant sequence realization.
//!
//! Each block orders its immediate children as units (a nested block stays
//! contiguous), truncates the ordered units to `numSamples`, inserts its
//! interruptions and is then flattened depth-first. Random orders draw from
//! a stream seeded with `derive_seed(seed, blockPath, participantIndex)`;
//! the k-th interruption spec of a block uses the tag
//! `"{blockPath}#interruptions/{k}"`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::{child_segment, segments, Block, BlockChild, Order, Placement, StudyConfig};
use crate::latin::{LatinSquare, Row};
use crate::seed;

/// Latin square row per latinSquare block path.
pub type PoolAssignments = BTreeMap<String, Row>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("E_MISSING_ASSIGNMENT: no Latin square row for block `{0}`")]
    MissingAssignment(String),
    #[error("E_BAD_ASSIGNMENT: row for block `{0}` is not a permutation of its components")]
    BadAssignment(String),
    #[error("E_UNSATISFIABLE: {count} interruptions with minGap {min_gap} do not fit {len} items")]
    Unsatisfiable { count: u64, min_gap: u64, len: usize },
    #[error("E_BAD_SPACING: deterministic interruption spacing must be at least 2")]
    BadSpacing,
}

impl SequenceError {
    pub fn code(&self) -> &'static str {
        match self {
            SequenceError::MissingAssignment(_) => "E_MISSING_ASSIGNMENT",
            SequenceError::BadAssignment(_) => "E_BAD_ASSIGNMENT",
            SequenceError::Unsatisfiable { .. } => "E_UNSATISFIABLE",
            SequenceError::BadSpacing => "E_BAD_SPACING",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RealizedItem {
    pub instance_id: String,
    pub component_name: String,
    pub block_path: String,
    pub is_interruption: bool,
    /// Placeholder for a dynamic block, expanded by the runtime.
    #[serde(default)]
    pub dynamic: bool,
    #[serde(default)]
    pub order_params: Map<String, Value>,
}

impl RealizedItem {
    fn new(name: &str, path: &str) -> Self {
        RealizedItem {
            instance_id: String::new(),
            component_name: name.into(),
            block_path: path.into(),
            is_interruption: false,
            dynamic: false,
            order_params: Map::new(),
        }
    }

    /// Whether a skip target (component name or block id) denotes this item.
    pub fn matches_target(&self, target: &str) -> bool {
        self.component_name == target || segments(&self.block_path).any(|s| s == target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RealizedSequence {
    pub items: Vec<RealizedItem>,
    pub participant_index: u64,
    pub seed: u64,
    /// Child indices of each static block in realized order, after
    /// truncation.
    pub block_orders: BTreeMap<String, Vec<usize>>,
}

impl RealizedSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn realize_sequence(
    config: &StudyConfig,
    participant_index: u64,
    seed: u64,
    assignments: &PoolAssignments,
) -> Result<RealizedSequence, SequenceError> {
    let mut r = Realizer { participant_index, seed, assignments, block_orders: BTreeMap::new() };
    let mut items = r.block(&config.sequence, &config.root_path())?;
    let mut seen: BTreeMap<String, u64> = BTreeMap::new();
    for item in &mut items {
        item.instance_id = if item.dynamic {
            format!("{}/*", item.block_path)
        } else {
            let k = seen.entry(item.component_name.clone()).or_insert(0);
            let id = format!("{}/{}#{k}", item.block_path, item.component_name);
            *k += 1;
            id
        };
    }
    Ok(RealizedSequence { items, participant_index, seed, block_orders: r.block_orders })
}

/// Row `participantIndex mod n` of the first square a pool seeded with
/// `seed` would issue, for every latinSquare block. Used when no pool file
/// is supplied.
pub fn implicit_assignments(config: &StudyConfig, participant_index: u64, seed: u64) -> PoolAssignments {
    let mut out = PoolAssignments::new();
    for b in config.blocks() {
        let n = b.block.components.len();
        if b.block.order == Order::LatinSquare && n > 0 {
            if let Ok(sq) = LatinSquare::build(n, seed::derive_seed(seed, &b.path, 0)) {
                out.insert(b.path.clone(), sq.rows[(participant_index % n as u64) as usize].clone());
            }
        }
    }
    out
}

struct Realizer<'a> {
    participant_index: u64,
    seed: u64,
    assignments: &'a PoolAssignments,
    block_orders: BTreeMap<String, Vec<usize>>,
}

impl Realizer<'_> {
    fn block(&mut self, block: &Block, path: &str) -> Result<Vec<RealizedItem>, SequenceError> {
        let n = block.components.len();
        let mut order: Vec<usize> = match &block.order {
            Order::Dynamic(spec) => {
                let name = block
                    .components
                    .iter()
                    .find_map(|c| match c {
                        BlockChild::Component(n) => Some(n.clone()),
                        BlockChild::Block(_) => None,
                    })
                    .or_else(|| block.id.clone())
                    .unwrap_or_else(|| spec.strategy.clone());
                let mut item = RealizedItem::new(&name, path);
                item.dynamic = true;
                item.order_params.insert("strategy".into(), Value::String(spec.strategy.clone()));
                return Ok(vec![item]);
            }
            Order::Fixed => (0..n).collect(),
            Order::Random => {
                let mut rng = seed::stream(seed::derive_seed(self.seed, path, self.participant_index));
                seed::permutation(&mut rng, n)
            }
            Order::LatinSquare => {
                let row = self
                    .assignments
                    .get(path)
                    .ok_or_else(|| SequenceError::MissingAssignment(path.into()))?;
                let mut sorted = row.clone();
                sorted.sort_unstable();
                if sorted != (0..n).collect::<Vec<_>>() {
                    return Err(SequenceError::BadAssignment(path.into()));
                }
                row.clone()
            }
        };
        order.truncate(block.realized_len());
        self.block_orders.insert(path.into(), order.clone());

        let mut units: Vec<Vec<RealizedItem>> = Vec::with_capacity(order.len());
        for &i in &order {
            match &block.components[i] {
                BlockChild::Component(name) => units.push(vec![RealizedItem::new(name, path)]),
                BlockChild::Block(inner) => {
                    let child_path = format!("{path}/{}", child_segment(inner, i));
                    units.push(self.block(inner, &child_path)?);
                }
            }
        }
        for (k, spec) in block.interruptions.iter().enumerate() {
            if spec.components.is_empty() {
                continue;
            }
            let tag = format!("{path}#interruptions/{k}");
            let mut rng = seed::stream(seed::derive_seed(self.seed, &tag, self.participant_index));
            units = insert_interruptions(
                units,
                &spec.placement,
                |j| {
                    let name = &spec.components[j % spec.components.len()];
                    let mut item = RealizedItem::new(name, path);
                    item.is_interruption = true;
                    vec![item]
                },
                &mut rng,
            )?;
        }
        Ok(units.into_iter().flatten().collect())
    }
}

/// Whether `count` random interruptions with at least `min_gap` originals
/// between consecutive ones fit into `len` items.
pub fn random_placement_feasible(len: u64, count: u64, min_gap: u64) -> bool {
    random_slots(len, count, min_gap).is_some()
}

// Size of the compressed range that k-subsets are drawn from.
fn random_slots(len: u64, count: u64, min_gap: u64) -> Option<u64> {
    let stride = min_gap.max(1) - 1;
    let taken = count.checked_sub(1)?.checked_mul(stride)?;
    let slots = len.checked_sub(taken)?;
    (slots >= count && count > 0).then_some(slots)
}

/// Inserts interruptions into `items`; `make(j)` builds the j-th one.
///
/// Deterministic placement puts interruptions at final-list indices
/// `firstLocation + j * spacing` for as long as an original item still
/// follows. Random placement picks `numInterruptions` distinct gaps
/// uniformly among all admissible sets, where gap `g` means "after the
/// g-th original item" (`1..=len`).
pub fn insert_interruptions<T, R: RngCore + ?Sized>(
    items: Vec<T>,
    placement: &Placement,
    mut make: impl FnMut(usize) -> T,
    rng: &mut R,
) -> Result<Vec<T>, SequenceError> {
    if items.is_empty() {
        return Ok(items);
    }
    let len = items.len();
    match *placement {
        Placement::Deterministic { first_location, spacing } => {
            // spacing 1 would leave no index free for the remaining originals
            if spacing < 2 {
                return Err(SequenceError::BadSpacing);
            }
            let mut out = Vec::with_capacity(len + len / spacing as usize + 1);
            let mut next = first_location;
            let mut j = 0;
            let mut rest = items.into_iter().peekable();
            while rest.peek().is_some() {
                if out.len() as u64 == next {
                    out.push(make(j));
                    j += 1;
                    next = next.saturating_add(spacing);
                } else if let Some(item) = rest.next() {
                    out.push(item);
                }
            }
            Ok(out)
        }
        Placement::Random { num_interruptions, min_gap } => {
            let slots = random_slots(len as u64, num_interruptions, min_gap).ok_or(
                SequenceError::Unsatisfiable { count: num_interruptions, min_gap, len },
            )?;
            // stars and bars: a k-subset of 1..=slots spread by the stride
            let stride = min_gap.max(1) - 1;
            let gaps: Vec<u64> = seed::subset(rng, slots, num_interruptions)
                .into_iter()
                .enumerate()
                .map(|(i, h)| h + i as u64 * stride)
                .collect();
            let mut out = Vec::with_capacity(len + gaps.len());
            let mut gi = 0;
            for (pos, item) in items.into_iter().enumerate() {
                out.push(item);
                while gi < gaps.len() && gaps[gi] == pos as u64 + 1 {
                    out.push(make(gi));
                    gi += 1;
                }
            }
            Ok(out)
        }
    }
}
