//! Reference models written separately from the library, plus seeded
//! scenario generators shared by the oracle, invariant and acceptance
//! targets.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use clusterstore::dro::{self, ReferenceGraph};
use clusterstore::dstc::{DstcParams, DstcState};
use clusterstore::stats::{PurgeScope, StatStore};
use clusterstore::store::{Database, IoCounters, ObjectId, PageId, Policy, Store, StoreConfig, StoreObserver};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn oids(v: &[u64]) -> Vec<ObjectId> {
    v.iter().copied().map(ObjectId).collect()
}

// ---------------------------------------------------------------------------
// Buffer replay

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufOp {
    Read(ObjectId),
    Write(ObjectId),
    Flush,
}

/// A store with a few relocated clusters and a random trace over it.
#[derive(Clone, Debug)]
pub struct BufferScenario {
    pub store: Store,
    pub config: StoreConfig,
    pub trace: Vec<BufOp>,
}

pub fn buffer_scenario(seed: u64) -> BufferScenario {
    let mut r = rng(seed);
    let mut store = Store::new(1024).unwrap();
    let n = r.gen_range(4..40);
    for _ in 0..n {
        let size = r.gen_range(100..700);
        store.insert_object(0, size, vec![]).unwrap();
    }
    let ids = store.object_ids();
    let mut db = Database::with_store(store, StoreConfig::default()).unwrap();
    for _ in 0..r.gen_range(0..4) {
        let k = r.gen_range(1..=ids.len().min(8));
        let chosen: Vec<ObjectId> = ids.choose_multiple(&mut r, k).copied().collect();
        db.rewrite_placement(&chosen, &mut ()).unwrap();
    }
    let store = db.into_store();
    let config = StoreConfig {
        page_capacity: 1024,
        frames: r.gen_range(1..6),
        policy: if r.gen_bool(0.5) { Policy::Lru } else { Policy::LruC },
        prefetch: r.gen_bool(0.4),
    };
    let len = r.gen_range(0..=200);
    let trace = (0..len)
        .map(|_| {
            let oid = ids[r.gen_range(0..ids.len())];
            match r.gen_range(0..20) {
                0 => BufOp::Flush,
                1..=4 => BufOp::Write(oid),
                _ => BufOp::Read(oid),
            }
        })
        .collect();
    BufferScenario { store, config, trace }
}

pub fn replay_library(s: &BufferScenario) -> IoCounters {
    let mut db = Database::with_store(s.store.clone(), s.config).unwrap();
    for op in &s.trace {
        match *op {
            BufOp::Read(o) => {
                db.access(o, &mut ()).unwrap();
            }
            BufOp::Write(o) => db.update(o, &mut ()).unwrap(),
            BufOp::Flush => db.flush(&mut ()),
        }
    }
    db.io_report()
}

/// Frames as a plain vector scanned linearly on every decision.
pub struct ReferenceBuffer {
    frames: usize,
    policy: Policy,
    prefetch: bool,
    clock: u64,
    /// (page, last use, dirty)
    resident: Vec<(PageId, u64, bool)>,
    pub reads: u64,
    pub writes: u64,
}

impl ReferenceBuffer {
    pub fn new(config: &StoreConfig) -> Self {
        Self {
            frames: config.frames,
            policy: config.policy,
            prefetch: config.prefetch,
            clock: 0,
            resident: Vec::new(),
            reads: 0,
            writes: 0,
        }
    }

    fn victim_index(&self, group: &dyn Fn(PageId) -> Vec<PageId>) -> usize {
        let lru_among = |cands: &mut dyn Iterator<Item = usize>| cands.min_by_key(|&i| self.resident[i].1).unwrap();
        match self.policy {
            Policy::Lru => lru_among(&mut (0..self.resident.len())),
            Policy::LruC => {
                // Cluster date: newest use among its resident members.
                let date = |page: PageId| {
                    let members = group(page);
                    self.resident
                        .iter()
                        .filter(|(p, _, _)| members.contains(p))
                        .map(|(_, t, _)| *t)
                        .max()
                        .unwrap()
                };
                let oldest = (0..self.resident.len())
                    .min_by_key(|&i| date(self.resident[i].0))
                    .unwrap();
                let members = group(self.resident[oldest].0);
                lru_among(&mut (0..self.resident.len()).filter(|&i| members.contains(&self.resident[i].0)))
            }
        }
    }

    fn evict(&mut self, group: &dyn Fn(PageId) -> Vec<PageId>) {
        let i = self.victim_index(group);
        let (_, _, dirty) = self.resident.remove(i);
        if dirty {
            self.writes += 1;
        }
    }

    fn bring(&mut self, page: PageId, group: &dyn Fn(PageId) -> Vec<PageId>) {
        self.clock += 1;
        if let Some(f) = self.resident.iter_mut().find(|f| f.0 == page) {
            f.1 = self.clock;
            return;
        }
        while self.resident.len() >= self.frames {
            self.evict(group);
        }
        self.reads += 1;
        self.resident.push((page, self.clock, false));
    }

    pub fn run(&mut self, store: &Store, trace: &[BufOp]) {
        let group = |p: PageId| store.cluster_pages(p);
        for op in trace {
            match *op {
                BufOp::Flush => {
                    while !self.resident.is_empty() {
                        self.evict(&group);
                    }
                }
                BufOp::Read(o) | BufOp::Write(o) => {
                    let page = store.placement(o).unwrap().page;
                    if self.prefetch {
                        let mut others: Vec<PageId> = group(page).into_iter().filter(|p| *p != page).collect();
                        others.truncate(self.frames - 1);
                        for p in others {
                            if !self.resident.iter().any(|f| f.0 == p) {
                                self.bring(p, &group);
                            }
                        }
                    }
                    self.bring(page, &group);
                    if matches!(op, BufOp::Write(_)) {
                        self.resident.iter_mut().find(|f| f.0 == page).unwrap().2 = true;
                    }
                }
            }
        }
    }
}

pub fn replay_reference(s: &BufferScenario) -> IoCounters {
    let mut b = ReferenceBuffer::new(&s.config);
    b.run(&s.store, &s.trace);
    IoCounters::new(b.reads, b.writes)
}

// ---------------------------------------------------------------------------
// Chain growth by exhaustive path enumeration

#[derive(Clone, Debug)]
pub struct GrowthScenario {
    pub graph: BTreeMap<ObjectId, Vec<ObjectId>>,
    pub ranked: Vec<(ObjectId, u64)>,
    pub max_distance: u32,
    pub max_dissimilarity: f64,
}

pub fn growth_scenario(seed: u64) -> GrowthScenario {
    let mut r = rng(seed);
    let tracked = r.gen_range(0..=10u64);
    let untracked = r.gen_range(0..4u64);
    let total = tracked + untracked;
    let mut graph = BTreeMap::new();
    for v in 1..=total {
        let degree = r.gen_range(0..4);
        let refs: Vec<ObjectId> = (0..degree).map(|_| ObjectId(r.gen_range(1..=total.max(1)))).collect();
        graph.insert(ObjectId(v), refs);
    }
    let mut ranked: Vec<(ObjectId, u64)> = (1..=tracked)
        .map(|v| {
            (
                ObjectId(v),
                *[10u64, 10, 11, 12, 20, 21, 40, 60].choose(&mut r).unwrap(),
            )
        })
        .collect();
    ranked.shuffle(&mut r);
    dro::rank_by_frequency(&mut ranked);
    GrowthScenario {
        graph,
        ranked,
        max_distance: r.gen_range(1..=3),
        max_dissimilarity: *[0.0, 0.05, 0.1, 0.5, 1.0].choose(&mut r).unwrap(),
    }
}

/// For every object reachable from `from` in 1..=max hops, the smallest
/// (hop count, slot sequence) over all walks reaching it.
fn enumerate_walks(from: ObjectId, graph: &BTreeMap<ObjectId, Vec<ObjectId>>, max: u32) -> Vec<ObjectId> {
    let mut best: BTreeMap<ObjectId, (usize, Vec<usize>)> = BTreeMap::new();
    let mut stack: Vec<(ObjectId, Vec<usize>)> = vec![(from, vec![])];
    while let Some((at, seq)) = stack.pop() {
        if seq.len() as u32 == max {
            continue;
        }
        for (slot, &next) in graph.references(at).iter().enumerate() {
            let mut s = seq.clone();
            s.push(slot);
            if next != from {
                let key = (s.len(), s.clone());
                let e = best.entry(next).or_insert(key.clone());
                if key < *e {
                    *e = key;
                }
            }
            stack.push((next, s));
        }
    }
    let mut out: Vec<(ObjectId, (usize, Vec<usize>))> = best.into_iter().collect();
    out.sort_by(|a, b| a.1.cmp(&b.1));
    out.into_iter().map(|(o, _)| o).collect()
}

pub fn reference_growth(s: &GrowthScenario) -> Vec<Vec<ObjectId>> {
    let freq: HashMap<ObjectId, u64> = s.ranked.iter().copied().collect();
    let mut chains: Vec<Vec<ObjectId>> = Vec::new();
    let mut has_pred: BTreeSet<ObjectId> = BTreeSet::new();

    for pass in 1..=s.max_distance {
        for &(start, _) in &s.ranked {
            if has_pred.contains(&start) {
                continue;
            }
            let mut ci = match chains.iter().position(|c| c[0] == start) {
                Some(i) => i,
                None => {
                    chains.push(vec![start]);
                    chains.len() - 1
                }
            };
            loop {
                let chain = chains[ci].clone();
                let mut pick = None;
                'outer: for &m in &chain {
                    for v in enumerate_walks(m, &s.graph, pass) {
                        let Some(&fv) = freq.get(&v) else { continue };
                        if v == start || chain.contains(&v) || has_pred.contains(&v) {
                            continue;
                        }
                        let (a, b) = (freq[&m] as f64, fv as f64);
                        let d = (a - b).abs() / a.max(b);
                        if d <= s.max_dissimilarity {
                            pick = Some(v);
                            break 'outer;
                        }
                    }
                }
                let Some(v) = pick else { break };
                has_pred.insert(v);
                if let Some(j) = chains.iter().position(|c| c[0] == v) {
                    let tail = chains.remove(j);
                    if j < ci {
                        ci -= 1;
                    }
                    chains[ci].extend(tail);
                } else {
                    chains[ci].push(v);
                }
            }
        }
    }
    chains
}

// ---------------------------------------------------------------------------
// Statistics event log

#[derive(Clone, Debug, PartialEq)]
pub enum StatEvent {
    Access(ObjectId, PageId, u32),
    Unload(PageId, Vec<(ObjectId, u32)>),
    Move(ObjectId, PageId),
    Delete(ObjectId),
    Freed(PageId),
    PurgeAll,
    PurgePages(BTreeSet<PageId>),
}

pub fn stat_events(seed: u64, capacity: u32) -> Vec<StatEvent> {
    let mut r = rng(seed);
    let n = r.gen_range(0..=500);
    let obj = |r: &mut ChaCha8Rng| ObjectId(r.gen_range(1..=12));
    let page = |r: &mut ChaCha8Rng| PageId(r.gen_range(1..=5));
    (0..n)
        .map(|_| match r.gen_range(0..100) {
            0..=54 => StatEvent::Access(obj(&mut r), page(&mut r), r.gen_range(1..=capacity / 2)),
            55..=74 => {
                let k = r.gen_range(0..5);
                let residents = (0..k).map(|_| (obj(&mut r), r.gen_range(1..=capacity / 2))).collect();
                StatEvent::Unload(page(&mut r), residents)
            }
            75..=84 => StatEvent::Move(obj(&mut r), page(&mut r)),
            85..=89 => StatEvent::Delete(obj(&mut r)),
            90..=93 => StatEvent::Freed(page(&mut r)),
            94 => StatEvent::PurgeAll,
            _ => StatEvent::PurgePages((0..r.gen_range(1..3)).map(|_| page(&mut r)).collect()),
        })
        .collect()
}

pub fn apply_stat_events(events: &[StatEvent], capacity: u32) -> StatStore {
    let mut s = StatStore::new(capacity);
    for e in events {
        match e {
            StatEvent::Access(o, p, z) => s.on_access(*o, *p, *z),
            StatEvent::Unload(p, res) => s.on_unload(*p, res),
            StatEvent::Move(o, p) => s.record_move(*o, *p),
            StatEvent::Delete(o) => s.on_delete(*o),
            StatEvent::Freed(p) => s.on_page_freed(*p),
            StatEvent::PurgeAll => s.purge(&PurgeScope::All),
            StatEvent::PurgePages(ps) => s.purge(&PurgeScope::Pages(ps.clone())),
        }
    }
    s
}

/// Expected state, each field derived from the log directly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecomputedStats {
    /// oid → (frequency, indicator)
    pub objects: BTreeMap<ObjectId, (u64, bool)>,
    /// page → (nb_load, usage_rate)
    pub pages: BTreeMap<PageId, (u64, f64)>,
    /// (page, oid) → size
    pub links: BTreeMap<(PageId, ObjectId), u32>,
}

fn object_reset(e: &StatEvent, o: ObjectId) -> bool {
    matches!(e, StatEvent::PurgeAll) || *e == StatEvent::Delete(o)
}

fn objects_at(log: &[StatEvent]) -> BTreeMap<ObjectId, (u64, bool)> {
    let all: BTreeSet<ObjectId> = log
        .iter()
        .filter_map(|e| match e {
            StatEvent::Access(o, _, _) => Some(*o),
            _ => None,
        })
        .collect();
    let mut out = BTreeMap::new();
    for o in all {
        let since = log.iter().rposition(|e| object_reset(e, o)).map_or(0, |i| i + 1);
        let tail = &log[since..];
        let freq = tail
            .iter()
            .filter(|e| matches!(e, StatEvent::Access(x, _, _) if *x == o))
            .count() as u64;
        if freq == 0 {
            continue;
        }
        let indicator = tail
            .iter()
            .rev()
            .find_map(|e| match e {
                StatEvent::Access(x, _, _) if *x == o => Some(true),
                StatEvent::Move(x, _) if *x == o => Some(false),
                _ => None,
            })
            .unwrap();
        out.insert(o, (freq, indicator));
    }
    out
}

fn links_at(log: &[StatEvent]) -> BTreeMap<(PageId, ObjectId), u32> {
    let mut out = BTreeMap::new();
    let objects = objects_at(log);
    for (i, e) in log.iter().enumerate() {
        let StatEvent::Access(o, p, size) = e else { continue };
        if !objects.contains_key(o) {
            continue;
        }
        let cut = log[i + 1..].iter().any(|later| match later {
            StatEvent::PurgeAll => true,
            StatEvent::Delete(x) => x == o,
            StatEvent::Move(x, q) => x == o && q == p,
            StatEvent::Freed(q) => q == p,
            StatEvent::PurgePages(ps) => ps.contains(p),
            _ => false,
        });
        if !cut {
            // Later accesses overwrite, so the last surviving one wins.
            out.insert((*p, *o), *size);
        }
    }
    out
}

fn page_removed_at(log: &[StatEvent], i: usize, p: PageId) -> bool {
    match &log[i] {
        StatEvent::PurgeAll => true,
        StatEvent::Freed(q) => *q == p,
        StatEvent::PurgePages(ps) => ps.contains(&p),
        StatEvent::Delete(o) => {
            let before = links_at(&log[..i]);
            let after = links_at(&log[..=i]);
            before.contains_key(&(p, *o)) && !after.keys().any(|(q, _)| *q == p)
        }
        _ => false,
    }
}

pub fn recompute_stats(log: &[StatEvent], capacity: u32) -> RecomputedStats {
    let objects = objects_at(log);
    let links = links_at(log);
    let touched: BTreeSet<PageId> = log
        .iter()
        .filter_map(|e| match e {
            StatEvent::Access(_, p, _) | StatEvent::Unload(p, _) => Some(*p),
            _ => None,
        })
        .collect();
    let mut pages = BTreeMap::new();
    for p in touched {
        let since = (0..log.len())
            .rev()
            .find(|&i| page_removed_at(log, i, p))
            .map_or(0, |i| i + 1);
        let live = log[since..].iter().any(|e| match e {
            StatEvent::Access(_, q, _) | StatEvent::Unload(q, _) => *q == p,
            _ => false,
        });
        if !live {
            continue;
        }
        let unloads: Vec<usize> = (since..log.len())
            .filter(|&i| matches!(&log[i], StatEvent::Unload(q, _) if *q == p))
            .collect();
        let rate = unloads.last().map_or(0.0, |&i| {
            let StatEvent::Unload(_, residents) = &log[i] else {
                unreachable!()
            };
            let state = objects_at(&log[..i]);
            let used: u64 = residents
                .iter()
                .filter(|(o, _)| state.get(o).is_some_and(|s| s.1))
                .map(|(_, z)| u64::from(*z))
                .sum();
            (used as f64 / f64::from(capacity)).min(1.0)
        });
        pages.insert(p, (unloads.len() as u64, rate));
    }
    RecomputedStats { objects, pages, links }
}

pub fn observed_stats(s: &StatStore) -> RecomputedStats {
    RecomputedStats {
        objects: s
            .objects()
            .map(|(o, st)| (o, (st.access_frequency, st.usage_indicator)))
            .collect(),
        pages: s.pages().map(|(p, st)| (p, (st.nb_load, st.usage_rate))).collect(),
        links: s.links().map(|(p, o, z)| ((p, o), z)).collect(),
    }
}

// ---------------------------------------------------------------------------
// DSTC consolidation replay

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DstcEvent {
    Access(ObjectId),
    Traverse(ObjectId, ObjectId),
}

pub fn dstc_events(seed: u64) -> (Vec<DstcEvent>, DstcParams) {
    let mut r = rng(seed);
    let params = DstcParams {
        window_length: r.gen_range(1..40),
        selection_threshold: r.gen_range(1..4),
        consolidation_decay: *[1.0, 0.5, 0.25].choose(&mut r).unwrap(),
        ..DstcParams::default()
    };
    let o = |r: &mut ChaCha8Rng| ObjectId(r.gen_range(1..=6));
    let events = (0..r.gen_range(0..=500))
        .map(|_| {
            if r.gen_bool(0.5) {
                DstcEvent::Access(o(&mut r))
            } else {
                DstcEvent::Traverse(o(&mut r), o(&mut r))
            }
        })
        .collect();
    (events, params)
}

pub fn apply_dstc_events(events: &[DstcEvent], params: &DstcParams) -> DstcState {
    let mut s = DstcState::new(*params);
    for e in events {
        match *e {
            DstcEvent::Access(o) => s.on_access(o, PageId(1), 10),
            DstcEvent::Traverse(a, b) => s.on_traverse(a, b),
        }
    }
    s
}

/// Consolidated weights of the windows closed so far.
pub fn replay_dstc_weights(events: &[DstcEvent], params: &DstcParams) -> BTreeMap<(ObjectId, ObjectId), f64> {
    // Split the log after every window_length-th access.
    let mut windows: Vec<&[DstcEvent]> = Vec::new();
    let (mut start, mut accesses) = (0, 0);
    for (i, e) in events.iter().enumerate() {
        if matches!(e, DstcEvent::Access(_)) {
            accesses += 1;
            if accesses == params.window_length {
                windows.push(&events[start..=i]);
                start = i + 1;
                accesses = 0;
            }
        }
    }
    let mut weights: BTreeMap<(ObjectId, ObjectId), f64> = BTreeMap::new();
    for w in windows {
        let pairs: BTreeSet<(ObjectId, ObjectId)> = w
            .iter()
            .filter_map(|e| match e {
                DstcEvent::Traverse(a, b) => Some((*a, *b)),
                _ => None,
            })
            .collect();
        for pair in pairs {
            let count = w.iter().filter(|e| **e == DstcEvent::Traverse(pair.0, pair.1)).count() as u64;
            if count >= params.selection_threshold {
                let old = weights.get(&pair).copied().unwrap_or(0.0);
                weights.insert(pair, params.consolidation_decay * old + count as f64);
            }
        }
    }
    weights
}

// ---------------------------------------------------------------------------
// Worked example

pub const FIXTURE_EDGES: [(u64, u64); 12] = [
    (6, 5),
    (6, 3),
    (5, 4),
    (5, 3),
    (5, 8),
    (4, 7),
    (7, 8),
    (1, 3),
    (3, 2),
    (3, 10),
    (10, 9),
    (9, 8),
];

pub const FIXTURE_ORDER: [(u64, u64); 9] = [
    (6, 60),
    (5, 60),
    (4, 60),
    (7, 40),
    (1, 20),
    (2, 20),
    (3, 20),
    (10, 18),
    (8, 17),
];

pub fn fixture_graph() -> BTreeMap<ObjectId, Vec<ObjectId>> {
    let mut g: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
    for (a, b) in FIXTURE_EDGES {
        g.entry(ObjectId(a)).or_default().push(ObjectId(b));
    }
    g
}

pub fn fixture_ranked() -> Vec<(ObjectId, u64)> {
    FIXTURE_ORDER.iter().map(|&(o, f)| (ObjectId(o), f)).collect()
}

/// The fixture as a store: objects 1..=10 each on its own page, with
/// statistics matching the sample frequencies. Object 9 is never used.
pub fn fixture_database() -> (Database, StatStore) {
    let mut store = Store::new(4096).unwrap();
    for _ in 1..=10 {
        store.insert_object(0, 3000, vec![]).unwrap();
    }
    for (oid, refs) in fixture_graph() {
        store.set_refs(oid, refs).unwrap();
    }
    let mut db = Database::with_store(
        store,
        StoreConfig {
            frames: 1,
            ..StoreConfig::default()
        },
    )
    .unwrap();
    let mut stats = StatStore::new(4096);
    // Round-robin so that every page is loaded several times.
    let mut left: BTreeMap<u64, u64> = FIXTURE_ORDER.iter().copied().collect();
    while left.values().any(|n| *n > 0) {
        for (oid, n) in left.iter_mut() {
            if *n > 0 {
                db.access(ObjectId(*oid), &mut stats).unwrap();
                *n -= 1;
            }
        }
    }
    (db, stats)
}

// ---------------------------------------------------------------------------
// Invariant checkers. Each returns a description of the first violation.

#[derive(Clone, Debug)]
pub enum StoreOp {
    Insert(u32),
    Delete(usize),
    Relocate(Vec<usize>),
}

pub fn store_ops(seed: u64, capacity: u32) -> Vec<StoreOp> {
    let mut r = rng(seed);
    (0..r.gen_range(1..60))
        .map(|_| match r.gen_range(0..10) {
            0..=5 => StoreOp::Insert(r.gen_range(1..=capacity)),
            6 => StoreOp::Delete(r.gen_range(0..64)),
            _ => StoreOp::Relocate((0..r.gen_range(1..10)).map(|_| r.gen_range(0..64)).collect()),
        })
        .collect()
}

/// Placement bijection and capacity after every operation; relocation keeps
/// the object set and the stored bytes.
pub fn check_store_ops(capacity: u32, ops: &[StoreOp]) -> Result<(), String> {
    let mut db = Database::with_store(Store::new(capacity).unwrap(), StoreConfig::default()).unwrap();
    for op in ops {
        let ids = db.store().object_ids();
        match op {
            StoreOp::Insert(size) => {
                db.insert_object(0, *size, vec![]).map_err(|e| e.to_string())?;
            }
            StoreOp::Delete(i) if !ids.is_empty() => {
                db.delete_object(ids[i % ids.len()], &mut ())
                    .map_err(|e| e.to_string())?;
            }
            StoreOp::Relocate(picks) if !ids.is_empty() => {
                let mut order: Vec<ObjectId> = Vec::new();
                for i in picks {
                    let o = ids[i % ids.len()];
                    if !order.contains(&o) {
                        order.push(o);
                    }
                }
                let before = (db.store().object_ids(), db.store().total_bytes());
                let report = db.rewrite_placement(&order, &mut ()).map_err(|e| e.to_string())?;
                let after = (db.store().object_ids(), db.store().total_bytes());
                if before != after {
                    return Err(format!(
                        "relocation changed the object set or bytes: {before:?} -> {after:?}"
                    ));
                }
                if !db.store().is_laid_out(&order) {
                    return Err(format!("{order:?} not contiguous after relocation"));
                }
                if report.moved.is_empty() && report.io != IoCounters::default() {
                    return Err("identity relocation charged I/O".into());
                }
            }
            _ => {}
        }
        db.store().check_invariants()?;
    }
    Ok(())
}

/// Resident pages never exceed the frame count.
pub fn check_buffer_bound(s: &BufferScenario) -> Result<(), String> {
    let mut db = Database::with_store(s.store.clone(), s.config).unwrap();
    for op in &s.trace {
        match *op {
            BufOp::Read(o) => {
                db.access(o, &mut ()).unwrap();
            }
            BufOp::Write(o) => db.update(o, &mut ()).unwrap(),
            BufOp::Flush => db.flush(&mut ()),
        }
        if db.buffer().len() > s.config.frames {
            return Err(format!(
                "{} resident pages with {} frames",
                db.buffer().len(),
                s.config.frames
            ));
        }
    }
    Ok(())
}

/// Integrity after every event, rates within [0,1], and frequencies that
/// only drop on delete or purge.
pub fn check_stat_events(events: &[StatEvent], capacity: u32) -> Result<(), String> {
    let mut s = StatStore::new(capacity);
    for (i, e) in events.iter().enumerate() {
        let before: BTreeMap<ObjectId, u64> = s.objects().map(|(o, st)| (o, st.access_frequency)).collect();
        apply_one(&mut s, e);
        s.check_integrity().map_err(|m| format!("event {i}: {m}"))?;
        if let Some((p, st)) = s.pages().find(|(_, st)| !(0.0..=1.0).contains(&st.usage_rate)) {
            return Err(format!("event {i}: page {p} rate {}", st.usage_rate));
        }
        let shrinking = matches!(e, StatEvent::Delete(_) | StatEvent::PurgeAll);
        for (o, f) in before {
            let now = s.object(o).map_or(0, |st| st.access_frequency);
            if now < f && !shrinking {
                return Err(format!("event {i}: frequency of {o} fell from {f} to {now}"));
            }
        }
    }
    Ok(())
}

fn apply_one(s: &mut StatStore, e: &StatEvent) {
    apply_stat_events_into(s, std::slice::from_ref(e));
}

fn apply_stat_events_into(s: &mut StatStore, events: &[StatEvent]) {
    for e in events {
        match e {
            StatEvent::Access(o, p, z) => s.on_access(*o, *p, *z),
            StatEvent::Unload(p, res) => s.on_unload(*p, res),
            StatEvent::Move(o, p) => s.record_move(*o, *p),
            StatEvent::Delete(o) => s.on_delete(*o),
            StatEvent::Freed(p) => s.on_page_freed(*p),
            StatEvent::PurgeAll => s.purge(&PurgeScope::All),
            StatEvent::PurgePages(ps) => s.purge(&PurgeScope::Pages(ps.clone())),
        }
    }
}

/// The placement order is a permutation of the ranked candidates, chains
/// are disjoint, and every link is a reachable couple within MaxDR.
pub fn check_growth(s: &GrowthScenario) -> Result<(), String> {
    let order = dro::order_placement(&s.ranked, &s.graph, s.max_distance, s.max_dissimilarity);
    let mut flat = order.concatenated();
    let mut want: Vec<ObjectId> = s.ranked.iter().map(|(o, _)| *o).collect();
    flat.sort();
    want.sort();
    if flat != want {
        return Err(format!(
            "placement {:?} is not a permutation of {want:?}",
            order.sublists
        ));
    }
    let freq: HashMap<ObjectId, u64> = s.ranked.iter().copied().collect();
    for &(m, u) in &order.links {
        let d = dro::dissimilarity(freq[&m], freq[&u]).unwrap();
        if d > s.max_dissimilarity {
            return Err(format!("link ({m},{u}) has dissimilarity {d}"));
        }
        if !enumerate_walks(m, &s.graph, s.max_distance).contains(&u) {
            return Err(format!("link ({m},{u}) is not reachable within {}", s.max_distance));
        }
    }
    if order.links.len() + order.sublists.len() != s.ranked.len() {
        return Err("links and chains do not add up".into());
    }
    Ok(())
}

/// A small generated database with a warm statistics store.
pub fn warm_database(seed: u64, frames: usize) -> (Database, StatStore) {
    use clusterstore::workload::{self, DatabaseSpec, WorkloadSpec};
    let mut r = rng(seed);
    let spec = DatabaseSpec {
        instance_count: r.gen_range(60..300),
        refs_per_object: r.gen_range(1..5),
        seed,
        ..DatabaseSpec::default()
    };
    let store = workload::generate_database(&spec).unwrap();
    let mut db = Database::with_store(
        store,
        StoreConfig {
            frames,
            ..StoreConfig::default()
        },
    )
    .unwrap();
    let mut stats = StatStore::new(4096);
    let wl = WorkloadSpec {
        root_count: r.gen_range(5..30),
        repetitions: r.gen_range(1..5),
        seed,
        ..WorkloadSpec::default()
    };
    workload::run_workload(&mut db, &mut stats, &wl).unwrap();
    (db, stats)
}

/// Proposal soundness, resemblance gating and abort side effects of a full
/// clustering run.
pub fn check_dro_run(seed: u64, params: &dro::DroParams) -> Result<(), String> {
    let (mut db, mut stats) = warm_database(seed, 1 + (seed % 5) as usize);
    // What the run sees once its initial flush has closed the statistics.
    let mut flushed = stats.clone();
    db.clone().flush(&mut flushed);
    let tracked: BTreeSet<ObjectId> = flushed.objects().map(|(o, _)| o).collect();
    let before = db.store().to_snapshot_string();

    let report = dro::run(&mut db, &mut stats, params, dro::Trigger::Manual).map_err(|e| e.to_string())?;
    db.store().check_invariants()?;
    stats.check_integrity()?;
    if report.outcome == dro::Outcome::Applied {
        let p = report.proposal.as_ref().unwrap();
        if p.resemblance >= params.max_resemblance {
            return Err(format!("applied with resemblance {}", p.resemblance));
        }
        let unique: BTreeSet<_> = p.order.iter().collect();
        if unique.len() != p.order.len() {
            return Err("duplicate in proposal".into());
        }
        if let Some(o) = p.order.iter().find(|o| !tracked.contains(o)) {
            return Err(format!("untracked object {o} proposed"));
        }
        if !db.store().is_laid_out(&p.order) {
            return Err("applied proposal is not contiguous".into());
        }
    } else {
        if before != db.store().to_snapshot_string() {
            return Err(format!("store changed on outcome {}", report.outcome));
        }
        if stats != flushed {
            return Err(format!(
                "statistics changed beyond the flush on outcome {}",
                report.outcome
            ));
        }
    }
    Ok(())
}

/// Units are duplicate-free, vertex-disjoint and within the size cap.
pub fn check_units(units: &[Vec<ObjectId>], max: usize) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for u in units {
        if u.is_empty() || u.len() > max {
            return Err(format!("unit of size {} (cap {max})", u.len()));
        }
        for o in u {
            if !seen.insert(*o) {
                return Err(format!("{o} appears twice"));
            }
        }
    }
    Ok(())
}
