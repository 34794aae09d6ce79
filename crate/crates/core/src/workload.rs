//! Synthetic object databases and traversal workloads.
//!
//! Databases are generated class by class with uniformly drawn object sizes
//! and a fixed number of outgoing references per object. Reference targets
//! are skewed: with probability `hot_bias` a target is drawn from a small hot
//! set of objects, otherwise uniformly. Workloads are schedules of
//! traversals from a fixed set of root objects; every random choice comes
//! from a seeded ChaCha stream, so a spec and seed fully determine both the
//! database and the traces.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{self, ApplyKey};
use crate::error::{Error, Result};
use crate::store::{Database, IoCounters, ObjectId, Store, StoreObserver, DEFAULT_PAGE_CAPACITY};

#[derive(Clone, Debug, PartialEq)]
pub struct DatabaseSpec {
    pub class_count: u32,
    pub instance_count: usize,
    pub refs_per_object: usize,
    pub object_size_min: u32,
    pub object_size_max: u32,
    /// Fraction of objects forming the hot set. 1.0 disables the skew.
    pub hot_fraction: f64,
    /// Probability that a reference targets the hot set.
    pub hot_bias: f64,
    pub page_capacity: u32,
    pub seed: u64,
}

impl Default for DatabaseSpec {
    fn default() -> Self {
        Self {
            class_count: 50,
            instance_count: 2000,
            refs_per_object: 5,
            object_size_min: 50,
            object_size_max: 200,
            hot_fraction: 0.2,
            hot_bias: 0.8,
            page_capacity: DEFAULT_PAGE_CAPACITY,
            seed: 1,
        }
    }
}

impl DatabaseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.instance_count == 0 {
            return Err(Error::config("class_count and instance_count must be positive"));
        }
        if self.refs_per_object > self.instance_count - 1 {
            return Err(Error::config(format!(
                "refs_per_object ({}) exceeds instance_count - 1 ({})",
                self.refs_per_object,
                self.instance_count - 1
            )));
        }
        if self.object_size_min == 0 || self.object_size_min > self.object_size_max {
            return Err(Error::config("object sizes need 0 < min <= max"));
        }
        if self.object_size_max > self.page_capacity {
            return Err(Error::OversizeObject {
                size: self.object_size_max,
                capacity: self.page_capacity,
            });
        }
        if !(self.hot_fraction > 0.0 && self.hot_fraction <= 1.0) {
            return Err(Error::config("hot_fraction must lie in (0,1]"));
        }
        config::unit_interval("hot_bias", self.hot_bias)
    }
}

impl ApplyKey for DatabaseSpec {
    fn apply_key(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "class_count" => self.class_count = config::value(key, v)?,
            "instance_count" => self.instance_count = config::value(key, v)?,
            "refs_per_object" => self.refs_per_object = config::value(key, v)?,
            "object_size_min" => self.object_size_min = config::value(key, v)?,
            "object_size_max" => self.object_size_max = config::value(key, v)?,
            "hot_fraction" => self.hot_fraction = config::value(key, v)?,
            "hot_bias" => self.hot_bias = config::value(key, v)?,
            "page_capacity" => self.page_capacity = config::value(key, v)?,
            "db_seed" => self.seed = config::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Generates a database: objects are inserted in id order, then wired.
pub fn generate_database(spec: &DatabaseSpec) -> Result<Store> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut store = Store::new(spec.page_capacity)?;
    let mut oids = Vec::with_capacity(spec.instance_count);
    for _ in 0..spec.instance_count {
        let class_id = rng.gen_range(0..spec.class_count);
        let size = rng.gen_range(spec.object_size_min..=spec.object_size_max);
        oids.push(store.insert_object(class_id, size, Vec::new())?);
    }

    let hot_len = ((spec.hot_fraction * oids.len() as f64).ceil() as usize).clamp(1, oids.len());
    let mut shuffled = oids.clone();
    shuffled.shuffle(&mut rng);
    let hot = &shuffled[..hot_len];

    for &oid in &oids {
        let mut refs = Vec::with_capacity(spec.refs_per_object);
        let mut taken = HashSet::from([oid]);
        while refs.len() < spec.refs_per_object {
            let pool = if rng.gen_bool(spec.hot_bias) && hot.iter().any(|h| !taken.contains(h)) {
                hot
            } else {
                &oids[..]
            };
            let target = pool[rng.gen_range(0..pool.len())];
            if taken.insert(target) {
                refs.push(target);
            }
        }
        store.set_refs(oid, refs)?;
    }
    Ok(store)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraversalKind {
    /// Depth-first over every reference slot.
    Simple,
    /// Follows a single reference slot.
    Hierarchy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Visit {
    pub oid: ObjectId,
    /// `None` for the root.
    pub via: Option<ObjectId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraversalTrace {
    pub visits: Vec<Visit>,
}

impl TraversalTrace {
    pub fn digest(&self) -> u64 {
        let mut d = Digest::default();
        d.feed_trace(self);
        d.finish()
    }
}

/// FNV-1a over visit records.
#[derive(Clone, Copy, Debug)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }
}

impl Digest {
    fn feed(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn feed_trace(&mut self, trace: &TraversalTrace) {
        for v in &trace.visits {
            self.feed(v.oid.0);
            self.feed(v.via.map_or(0, |o| o.0));
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Depth-first traversal over all reference slots down to `depth`. Branches
/// may revisit objects; a reference back onto the current path is skipped.
pub fn simple_traversal(
    db: &mut Database,
    root: ObjectId,
    depth: u32,
    obs: &mut impl StoreObserver,
) -> Result<TraversalTrace> {
    fn visit(
        db: &mut Database,
        oid: ObjectId,
        via: Option<ObjectId>,
        remaining: u32,
        path: &mut Vec<ObjectId>,
        trace: &mut TraversalTrace,
        obs: &mut impl StoreObserver,
    ) -> Result<()> {
        if let Some(from) = via {
            obs.on_traverse(from, oid);
        }
        let refs = db.access(oid, obs)?.refs.clone();
        trace.visits.push(Visit { oid, via });
        if remaining == 0 {
            return Ok(());
        }
        path.push(oid);
        for child in refs {
            if !path.contains(&child) {
                visit(db, child, Some(oid), remaining - 1, path, trace, obs)?;
            }
        }
        path.pop();
        Ok(())
    }

    let mut trace = TraversalTrace::default();
    visit(db, root, None, depth, &mut Vec::new(), &mut trace, obs)?;
    Ok(trace)
}

/// Follows reference slot `slot` down to `depth`, stopping early at an
/// object without that slot or on a cycle.
pub fn hierarchy_traversal(
    db: &mut Database,
    root: ObjectId,
    depth: u32,
    slot: usize,
    obs: &mut impl StoreObserver,
) -> Result<TraversalTrace> {
    let mut trace = TraversalTrace::default();
    let mut path = Vec::new();
    let mut current = root;
    let mut via = None;
    loop {
        if let Some(from) = via {
            obs.on_traverse(from, current);
        }
        let next = db.access(current, obs)?.refs.get(slot).copied();
        trace.visits.push(Visit { oid: current, via });
        path.push(current);
        match next {
            Some(n) if path.len() <= depth as usize && !path.contains(&n) => {
                via = Some(current);
                current = n;
            }
            _ => break,
        }
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadKind {
    Simple,
    Hierarchy,
    /// Each transaction draws its kind and depth uniformly.
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub simple_depth: u32,
    pub hierarchy_depth: u32,
    pub ref_slot: usize,
    pub root_count: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            kind: WorkloadKind::Hierarchy,
            simple_depth: 2,
            hierarchy_depth: 3,
            ref_slot: 0,
            root_count: 100,
            repetitions: 10,
            seed: 1,
        }
    }
}

impl ApplyKey for WorkloadSpec {
    fn apply_key(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "workload" => {
                self.kind = match v {
                    "simple" => WorkloadKind::Simple,
                    "hierarchy" => WorkloadKind::Hierarchy,
                    "mixed" => WorkloadKind::Mixed,
                    _ => return Err(Error::config(format!("unknown workload '{v}'"))),
                }
            }
            "simple_depth" => self.simple_depth = config::value(key, v)?,
            "hierarchy_depth" => self.hierarchy_depth = config::value(key, v)?,
            "ref_slot" => self.ref_slot = config::value(key, v)?,
            "root_count" => self.root_count = config::value(key, v)?,
            "repetitions" => self.repetitions = config::value(key, v)?,
            "workload_seed" => self.seed = config::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub root: ObjectId,
    pub kind: TraversalKind,
    pub depth: u32,
}

/// Draws `root_count` distinct roots and returns every root repeated
/// `repetitions` times, in a seeded random order.
pub fn schedule(spec: &WorkloadSpec, store: &Store) -> Result<Vec<Transaction>> {
    let ids = store.object_ids();
    if spec.root_count > ids.len() {
        return Err(Error::config(format!(
            "root_count {} exceeds object count {}",
            spec.root_count,
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let roots: Vec<ObjectId> = ids.choose_multiple(&mut rng, spec.root_count).copied().collect();
    let mut txs = Vec::with_capacity(spec.root_count * spec.repetitions);
    for _ in 0..spec.repetitions {
        for &root in &roots {
            let kind = match spec.kind {
                WorkloadKind::Simple => TraversalKind::Simple,
                WorkloadKind::Hierarchy => TraversalKind::Hierarchy,
                WorkloadKind::Mixed if rng.gen_bool(0.5) => TraversalKind::Simple,
                WorkloadKind::Mixed => TraversalKind::Hierarchy,
            };
            let max_depth = match kind {
                TraversalKind::Simple => spec.simple_depth,
                TraversalKind::Hierarchy => spec.hierarchy_depth,
            };
            let depth = match spec.kind {
                WorkloadKind::Mixed => rng.gen_range(0..=max_depth),
                _ => max_depth,
            };
            txs.push(Transaction { root, kind, depth });
        }
    }
    txs.shuffle(&mut rng);
    Ok(txs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkloadOutcome {
    pub io: IoCounters,
    pub digest: u64,
    pub transactions: usize,
    pub visits: usize,
}

pub fn run_transactions(
    db: &mut Database,
    obs: &mut impl StoreObserver,
    transactions: &[Transaction],
    ref_slot: usize,
    digest: &mut Digest,
) -> Result<usize> {
    let mut visits = 0;
    for tx in transactions {
        let trace = match tx.kind {
            TraversalKind::Simple => simple_traversal(db, tx.root, tx.depth, obs)?,
            TraversalKind::Hierarchy => hierarchy_traversal(db, tx.root, tx.depth, ref_slot, obs)?,
        };
        visits += trace.visits.len();
        digest.feed_trace(&trace);
    }
    Ok(visits)
}

/// Runs the full schedule and reports the I/O it caused.
pub fn run_workload(db: &mut Database, obs: &mut impl StoreObserver, spec: &WorkloadSpec) -> Result<WorkloadOutcome> {
    let txs = schedule(spec, db.store())?;
    let start = db.io_report();
    let mut digest = Digest::default();
    let visits = run_transactions(db, obs, &txs, spec.ref_slot, &mut digest)?;
    Ok(WorkloadOutcome {
        io: db.io_report() - start,
        digest: digest.finish(),
        transactions: txs.len(),
        visits,
    })
}
