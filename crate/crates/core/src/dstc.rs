//! Simplified DSTC baseline.
//!
//! Reference traversals are counted in an in-memory observation matrix for
//! one window of object accesses. At the end of a window the significant
//! counts are kept and merged into a persistent consolidated matrix. A
//! clustering pass turns the consolidated weights into clustering units
//! (linear object sequences grown greedily along the heaviest edges) and
//! writes each unit contiguously.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use crate::config::{self, ApplyKey};
use crate::error::{Error, Result};
use crate::store::{Database, IoCounters, ObjectId, PageId, RelocationReport, StoreObserver};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DstcParams {
    /// Object accesses per observation window.
    pub window_length: u64,
    /// Minimum in-window count for a pair to survive selection.
    pub selection_threshold: u64,
    /// Multiplies the old weight of a pair before a new count is merged.
    pub consolidation_decay: f64,
    /// Minimum consolidated weight for an edge to join a unit.
    pub unit_min_weight: f64,
    pub max_unit_size: usize,
}

impl Default for DstcParams {
    fn default() -> Self {
        Self {
            window_length: 1000,
            selection_threshold: 2,
            consolidation_decay: 1.0,
            unit_min_weight: 2.0,
            max_unit_size: 64,
        }
    }
}

impl DstcParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.selection_threshold == 0 {
            return Err(Error::config("window_length and selection_threshold must be positive"));
        }
        if !(self.consolidation_decay > 0.0 && self.consolidation_decay <= 1.0) {
            return Err(Error::config("consolidation_decay must lie in (0,1]"));
        }
        if self.unit_min_weight <= 0.0 {
            return Err(Error::config("unit_min_weight must be positive"));
        }
        if self.max_unit_size < 2 {
            return Err(Error::config("max_unit_size must be at least 2"));
        }
        Ok(())
    }
}

impl ApplyKey for DstcParams {
    fn apply_key(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "window_length" => self.window_length = config::value(key, v)?,
            "selection_threshold" => self.selection_threshold = config::value(key, v)?,
            "consolidation_decay" => self.consolidation_decay = config::value(key, v)?,
            "unit_min_weight" => self.unit_min_weight = config::value(key, v)?,
            "max_unit_size" => self.max_unit_size = config::value(key, v)?,
            _ => return Ok(false),
        }
        self.validate()?;
        Ok(true)
    }
}

pub type Pair = (ObjectId, ObjectId);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObservationMatrix {
    pub window: u64,
    counts: BTreeMap<Pair, u64>,
}

impl ObservationMatrix {
    /// Counts one traversal of the directed reference `from → to`.
    pub fn observe(&mut self, from: ObjectId, to: ObjectId) {
        *self.counts.entry((from, to)).or_insert(0) += 1;
    }

    pub fn count(&self, from: ObjectId, to: ObjectId) -> u64 {
        self.counts.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Closes the window: keeps pairs counted at least `selection_threshold`
    /// times, heaviest first (ties by ascending pair), and clears the matrix.
    pub fn end_window(&mut self, params: &DstcParams) -> Vec<(Pair, u64)> {
        let mut kept: Vec<(Pair, u64)> = std::mem::take(&mut self.counts)
            .into_iter()
            .filter(|(_, c)| *c >= params.selection_threshold)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        self.window += 1;
        kept
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConsolidatedMatrix {
    weights: BTreeMap<Pair, f64>,
}

impl ConsolidatedMatrix {
    pub fn weight(&self, from: ObjectId, to: ObjectId) -> f64 {
        self.weights.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Merges window survivors; pairs absent from `filtered` keep their
    /// weight.
    pub fn consolidate(&mut self, filtered: &[(Pair, u64)], params: &DstcParams) {
        for &(pair, count) in filtered {
            let w = self.weights.entry(pair).or_insert(0.0);
            *w = params.consolidation_decay * *w + count as f64;
        }
    }
}

pub type ClusteringUnit = Vec<ObjectId>;

/// Greedy attraction ordering over the consolidated weights, read as an
/// undirected graph (both directions summed). Seeds each unit with the
/// heaviest edge between two unassigned objects, then keeps extending either
/// end with the heaviest edge to an unassigned object.
pub fn build_units(consolidated: &ConsolidatedMatrix, params: &DstcParams) -> Vec<ClusteringUnit> {
    let mut undirected: BTreeMap<Pair, f64> = BTreeMap::new();
    for ((a, b), w) in consolidated.entries() {
        if a != b {
            *undirected.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
        }
    }
    let mut edges: Vec<(Pair, f64)> = undirected
        .into_iter()
        .filter(|(_, w)| *w >= params.unit_min_weight)
        .collect();
    edges.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut adjacency: BTreeMap<ObjectId, Vec<(ObjectId, f64)>> = BTreeMap::new();
    for &((a, b), w) in &edges {
        adjacency.entry(a).or_default().push((b, w));
        adjacency.entry(b).or_default().push((a, w));
    }

    let mut assigned: HashSet<ObjectId> = HashSet::new();
    let mut units = Vec::new();
    for &((a, b), _) in &edges {
        if assigned.contains(&a) || assigned.contains(&b) {
            continue;
        }
        let mut unit = std::collections::VecDeque::from([a, b]);
        assigned.insert(a);
        assigned.insert(b);
        while unit.len() < params.max_unit_size {
            let best = [(true, unit[0]), (false, unit[unit.len() - 1])]
                .into_iter()
                .flat_map(|(front, end)| {
                    adjacency
                        .get(&end)
                        .into_iter()
                        .flatten()
                        .filter(|(o, _)| !assigned.contains(o))
                        .map(move |(o, w)| (front, *o, *w))
                })
                .min_by(|x, y| y.2.total_cmp(&x.2).then(x.1.cmp(&y.1)).then(y.0.cmp(&x.0)));
            let Some((front, o, _)) = best else { break };
            assigned.insert(o);
            if front {
                unit.push_front(o);
            } else {
                unit.push_back(o);
            }
        }
        units.push(unit.into_iter().collect());
    }
    units
}

/// Writes each unit contiguously into its own cluster extent.
pub fn reorganize(
    units: &[ClusteringUnit],
    db: &mut Database,
    obs: &mut impl StoreObserver,
) -> Result<RelocationReport> {
    let mut total = RelocationReport::default();
    for unit in units {
        total.absorb(db.rewrite_placement(unit, obs)?);
    }
    Ok(total)
}

/// Observation state carried across windows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DstcState {
    pub params: DstcParams,
    pub observation: ObservationMatrix,
    pub consolidated: ConsolidatedMatrix,
    window_accesses: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DstcReport {
    pub units: Vec<ClusteringUnit>,
    pub moved: usize,
    pub overhead: IoCounters,
}

impl DstcState {
    pub fn new(params: DstcParams) -> Self {
        Self {
            params,
            ..Default::default()
        }
    }

    pub fn close_window(&mut self) {
        let filtered = self.observation.end_window(&self.params);
        self.consolidated.consolidate(&filtered, &self.params);
        self.window_accesses = 0;
    }

    /// Closes the running window, builds units and reorganizes the store.
    pub fn run(&mut self, db: &mut Database) -> Result<DstcReport> {
        self.params.validate()?;
        let start = db.io_report();
        if self.window_accesses > 0 || !self.observation.is_empty() {
            self.close_window();
        }
        let units = build_units(&self.consolidated, &self.params);
        let relocation = reorganize(&units, db, &mut ())?;
        Ok(DstcReport {
            moved: relocation.moved.len(),
            units,
            overhead: db.io_report() - start,
        })
    }

    /// Unit dump: `unit,position,oid`.
    pub fn units_csv(units: &[ClusteringUnit]) -> String {
        let mut out = String::from("unit,position,oid\n");
        for (u, unit) in units.iter().enumerate() {
            for (i, oid) in unit.iter().enumerate() {
                let _ = writeln!(out, "{u},{i},{oid}");
            }
        }
        out
    }
}

impl StoreObserver for DstcState {
    fn on_access(&mut self, _oid: ObjectId, _page: PageId, _size: u32) {
        self.window_accesses += 1;
        if self.window_accesses >= self.params.window_length {
            self.close_window();
        }
    }

    fn on_traverse(&mut self, from: ObjectId, to: ObjectId) {
        self.observation.observe(from, to);
    }
}

/// Objects covered by a set of units.
pub fn unit_members(units: &[ClusteringUnit]) -> BTreeSet<ObjectId> {
    units.iter().flatten().copied().collect()
}
