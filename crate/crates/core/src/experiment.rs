//! Before/after clustering experiments over a buffer-size sweep.
//!
//! Each sweep point and iteration works on a private copy of the generated
//! store: run the workload cold, cluster (the overhead window), then replay
//! the identical schedule cold again. The three windows partition every I/O
//! of the job.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{self, ApplyKey};
use crate::dro::{self, ClusteringReport, DroParams, Trigger};
use crate::dstc::{DstcParams, DstcReport, DstcState};
use crate::error::{Error, Result};
use crate::stats::StatStore;
use crate::store::{Database, IoCounters, ObjectId, PageId, Policy, Store, StoreConfig, StoreObserver};
use crate::workload::{self, DatabaseSpec, Digest, WorkloadSpec};

/// `before / after`. A zero `after` gives infinity, unless `before` is zero
/// too, in which case nothing changed.
pub fn gain_factor(before: f64, after: f64) -> f64 {
    if after == 0.0 {
        if before == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        before / after
    }
}

pub fn format_gain(g: f64) -> String {
    if g.is_infinite() {
        "inf".to_string()
    } else {
        format!("{g:.4}")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EngineKind {
    #[default]
    None,
    Dro,
    Dstc,
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(EngineKind::None),
            "dro" => Ok(EngineKind::Dro),
            "dstc" => Ok(EngineKind::Dstc),
            _ => Err(Error::config(format!("unknown engine '{s}' (none|dro|dstc)"))),
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::None => "none",
            EngineKind::Dro => "dro",
            EngineKind::Dstc => "dstc",
        })
    }
}

/// A buffer size, absolute or relative to the database page count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrameSpec {
    Count(usize),
    Percent(f64),
}

impl FrameSpec {
    pub fn resolve(&self, page_count: usize) -> usize {
        match *self {
            FrameSpec::Count(n) => n.max(1),
            FrameSpec::Percent(p) => ((p / 100.0 * page_count as f64).round() as usize).max(1),
        }
    }
}

impl FromStr for FrameSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("invalid frame count '{s}'"));
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(bad());
            }
            Ok(FrameSpec::Percent(p))
        } else {
            match s.parse::<usize>() {
                Ok(n) if n > 0 => Ok(FrameSpec::Count(n)),
                _ => Err(bad()),
            }
        }
    }
}

pub fn parse_frame_list(s: &str) -> Result<Vec<FrameSpec>> {
    let list = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(FrameSpec::from_str)
        .collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::config("frame sweep is empty"));
    }
    Ok(list)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub database: DatabaseSpec,
    pub workload: WorkloadSpec,
    pub engine: EngineKind,
    pub dro: DroParams,
    pub dstc: DstcParams,
    pub frames: Vec<FrameSpec>,
    /// Overrides the engine's default policy (LRU-C for DSTC, LRU otherwise).
    pub policy: Option<Policy>,
    pub prefetch: Option<bool>,
    pub iterations: usize,
    /// Cluster every N transactions in `run`; `None` disables it.
    pub auto_trigger: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            database: DatabaseSpec::default(),
            workload: WorkloadSpec::default(),
            engine: EngineKind::Dro,
            dro: DroParams::default(),
            dstc: DstcParams::default(),
            frames: vec![FrameSpec::Percent(10.0)],
            policy: None,
            prefetch: None,
            iterations: 10,
            auto_trigger: None,
        }
    }
}

impl ApplyKey for ExperimentConfig {
    fn apply_key(&mut self, key: &str, v: &str) -> Result<bool> {
        if self.database.apply_key(key, v)?
            || self.workload.apply_key(key, v)?
            || self.dro.apply_key(key, v)?
            || self.dstc.apply_key(key, v)?
        {
            return Ok(true);
        }
        match key {
            "engine" => self.engine = v.parse()?,
            "frames" => self.frames = parse_frame_list(v)?,
            "policy" => self.policy = Some(v.parse()?),
            "prefetch" => self.prefetch = Some(config::flag(key, v)?),
            "iterations" => self.iterations = config::value(key, v)?,
            "auto_trigger" => {
                let n: usize = config::value(key, v)?;
                self.auto_trigger = (n > 0).then_some(n);
            }
            "seed" => self.set_seed(config::value(key, v)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: Self = config::from_pairs(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.database.seed = seed;
        self.workload.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.database.validate()?;
        self.dro.validate()?;
        self.dstc.validate()?;
        if self.frames.is_empty() {
            return Err(Error::config("frame sweep is empty"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        Ok(())
    }

    pub fn store_config(&self, page_capacity: u32, frames: usize) -> StoreConfig {
        let dstc = self.engine == EngineKind::Dstc;
        StoreConfig {
            page_capacity,
            frames,
            policy: self.policy.unwrap_or(if dstc { Policy::LruC } else { Policy::Lru }),
            prefetch: self.prefetch.unwrap_or(dstc),
        }
    }
}

/// Engine-specific observation state.
#[derive(Clone, Debug)]
pub enum EngineState {
    None,
    Dro { stats: StatStore, params: DroParams },
    Dstc(DstcState),
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineReport {
    None,
    Dro(ClusteringReport),
    Dstc(DstcReport),
}

impl EngineReport {
    pub const CSV_HEADER: &'static str = ClusteringReport::CSV_HEADER;

    pub fn overhead(&self) -> IoCounters {
        match self {
            EngineReport::None => IoCounters::default(),
            EngineReport::Dro(r) => r.overhead,
            EngineReport::Dstc(r) => r.overhead,
        }
    }

    pub fn moved(&self) -> usize {
        match self {
            EngineReport::None => 0,
            EngineReport::Dro(r) => r.moved,
            EngineReport::Dstc(r) => r.moved,
        }
    }

    pub fn outcome(&self) -> String {
        match self {
            EngineReport::None => "none".into(),
            EngineReport::Dro(r) => r.outcome.to_string(),
            EngineReport::Dstc(r) if r.moved > 0 => "applied".into(),
            EngineReport::Dstc(_) => "no_units".into(),
        }
    }

    /// Row in the clustering report layout; fields an engine lacks are empty.
    pub fn csv_row(&self) -> String {
        match self {
            EngineReport::Dro(r) => r.csv_row(),
            other => {
                let members = match other {
                    EngineReport::Dstc(r) => r.units.iter().map(Vec::len).sum::<usize>().to_string(),
                    _ => String::new(),
                };
                let o = other.overhead();
                format!(
                    "{},,{},,{},{},{}",
                    other.outcome(),
                    members,
                    other.moved(),
                    o.page_reads,
                    o.page_writes
                )
            }
        }
    }
}

impl EngineState {
    pub fn new(config: &ExperimentConfig, page_capacity: u32) -> Self {
        match config.engine {
            EngineKind::None => EngineState::None,
            EngineKind::Dro => EngineState::Dro {
                stats: StatStore::new(page_capacity),
                params: config.dro,
            },
            EngineKind::Dstc => EngineState::Dstc(DstcState::new(config.dstc)),
        }
    }

    /// Flushes the buffer and clusters. Every I/O caused here is overhead.
    pub fn cluster(&mut self, db: &mut Database, trigger: Trigger) -> Result<EngineReport> {
        let start = db.io_report();
        db.flush(self);
        let mut report = match self {
            EngineState::None => EngineReport::None,
            EngineState::Dro { stats, params } => EngineReport::Dro(dro::run(db, stats, params, trigger)?),
            EngineState::Dstc(state) => EngineReport::Dstc(state.run(db)?),
        };
        let overhead = db.io_report() - start;
        match &mut report {
            EngineReport::None => {}
            EngineReport::Dro(r) => r.overhead = overhead,
            EngineReport::Dstc(r) => r.overhead = overhead,
        }
        Ok(report)
    }
}

impl StoreObserver for EngineState {
    fn on_access(&mut self, oid: ObjectId, page: PageId, size: u32) {
        match self {
            EngineState::None => {}
            EngineState::Dro { stats, .. } => stats.on_access(oid, page, size),
            EngineState::Dstc(s) => s.on_access(oid, page, size),
        }
    }

    fn on_unload(&mut self, page: PageId, residents: &[(ObjectId, u32)]) {
        match self {
            EngineState::None => {}
            EngineState::Dro { stats, .. } => stats.on_unload(page, residents),
            EngineState::Dstc(s) => s.on_unload(page, residents),
        }
    }

    fn on_move(&mut self, oid: ObjectId, from: PageId, to: PageId) {
        match self {
            EngineState::None => {}
            EngineState::Dro { stats, .. } => stats.on_move(oid, from, to),
            EngineState::Dstc(s) => s.on_move(oid, from, to),
        }
    }

    fn on_delete(&mut self, oid: ObjectId) {
        match self {
            EngineState::None => {}
            EngineState::Dro { stats, .. } => stats.on_delete(oid),
            EngineState::Dstc(s) => s.on_delete(oid),
        }
    }

    fn on_page_freed(&mut self, page: PageId) {
        match self {
            EngineState::None => {}
            EngineState::Dro { stats, .. } => stats.on_page_freed(page),
            EngineState::Dstc(s) => s.on_page_freed(page),
        }
    }

    fn on_traverse(&mut self, from: ObjectId, to: ObjectId) {
        match self {
            EngineState::None => {}
            EngineState::Dro { stats, .. } => stats.on_traverse(from, to),
            EngineState::Dstc(s) => s.on_traverse(from, to),
        }
    }
}

/// One pre/cluster/post job.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationResult {
    pub frames: usize,
    pub iteration: usize,
    pub pre: IoCounters,
    pub post: IoCounters,
    pub overhead: IoCounters,
    pub total: IoCounters,
    pub pre_digest: u64,
    pub post_digest: u64,
    pub report: EngineReport,
}

pub fn run_iteration(
    base: &Store,
    config: &ExperimentConfig,
    frames: usize,
    iteration: usize,
) -> Result<IterationResult> {
    let mut db = Database::with_store(base.clone(), config.store_config(base.page_capacity(), frames))?;
    let mut engine = EngineState::new(config, base.page_capacity());
    let workload = WorkloadSpec {
        seed: config.workload.seed.wrapping_add(iteration as u64),
        ..config.workload.clone()
    };
    db.reset_io();

    let pre = workload::run_workload(&mut db, &mut engine, &workload)?;
    let report = engine.cluster(&mut db, Trigger::Manual)?;
    let mark = db.io_report();
    let post = workload::run_workload(&mut db, &mut (), &workload)?;
    // Leave the post window closed so the totals add up.
    db.flush(&mut ());
    let post_io = db.io_report() - mark;
    debug_assert!(post_io.page_reads >= post.io.page_reads);

    Ok(IterationResult {
        frames,
        iteration,
        pre: pre.io,
        post: post_io,
        overhead: report.overhead(),
        total: db.io_report(),
        pre_digest: pre.digest,
        post_digest: post.digest,
        report,
    })
}

/// How sweep jobs are scheduled. `Parallel` runs sequentially when the
/// `parallel` feature is off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    Parallel,
}

impl Default for Executor {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Executor::Parallel
        } else {
            Executor::Sequential
        }
    }
}

fn run_jobs(
    jobs: &[(usize, usize)],
    executor: Executor,
    f: impl Fn(usize, usize) -> Result<IterationResult> + Sync + Send,
) -> Result<Vec<IterationResult>> {
    match executor {
        #[cfg(feature = "parallel")]
        Executor::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(|&(fr, it)| f(fr, it)).collect()
        }
        _ => jobs.iter().map(|&(fr, it)| f(fr, it)).collect(),
    }
}

/// Mean I/O of one phase over the iterations of a sweep point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseMean {
    pub reads: f64,
    pub writes: f64,
}

impl PhaseMean {
    pub fn total(&self) -> f64 {
        self.reads + self.writes
    }

    fn of(samples: impl Iterator<Item = IoCounters>) -> Self {
        let (mut n, mut r, mut w) = (0u64, 0u64, 0u64);
        for s in samples {
            n += 1;
            r += s.page_reads;
            w += s.page_writes;
        }
        if n == 0 {
            return Self::default();
        }
        Self {
            reads: r as f64 / n as f64,
            writes: w as f64 / n as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub frames: usize,
    pub pre: PhaseMean,
    pub post: PhaseMean,
    pub overhead: PhaseMean,
    pub gain_factor: f64,
}

impl PointResult {
    fn from_iterations(frames: usize, runs: &[&IterationResult]) -> Self {
        let pre = PhaseMean::of(runs.iter().map(|r| r.pre));
        let post = PhaseMean::of(runs.iter().map(|r| r.post));
        Self {
            frames,
            pre,
            post,
            overhead: PhaseMean::of(runs.iter().map(|r| r.overhead)),
            gain_factor: gain_factor(pre.total(), post.total()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResults {
    pub engine: EngineKind,
    pub page_count: usize,
    pub points: Vec<PointResult>,
    /// Sorted by (frames, iteration).
    pub iterations: Vec<IterationResult>,
}

/// Generates the database once and runs every sweep point and iteration.
pub fn run_bench(config: &ExperimentConfig, executor: Executor) -> Result<BenchResults> {
    config.validate()?;
    let base = workload::generate_database(&config.database)?;
    run_bench_on(&base, config, executor)
}

pub fn run_bench_on(base: &Store, config: &ExperimentConfig, executor: Executor) -> Result<BenchResults> {
    config.validate()?;
    let page_count = base.page_count();
    let mut frames: Vec<usize> = config.frames.iter().map(|f| f.resolve(page_count)).collect();
    frames.sort_unstable();
    frames.dedup();

    let jobs: Vec<(usize, usize)> = frames
        .iter()
        .flat_map(|&f| (0..config.iterations).map(move |i| (f, i)))
        .collect();
    let mut iterations = run_jobs(&jobs, executor, |f, i| run_iteration(base, config, f, i))?;
    iterations.sort_by_key(|r| (r.frames, r.iteration));

    let mut by_frames: BTreeMap<usize, Vec<&IterationResult>> = BTreeMap::new();
    for r in &iterations {
        by_frames.entry(r.frames).or_default().push(r);
    }
    let points = by_frames
        .into_iter()
        .map(|(f, runs)| PointResult::from_iterations(f, &runs))
        .collect();
    Ok(BenchResults {
        engine: config.engine,
        page_count,
        points,
        iterations,
    })
}

pub const RESULTS_HEADER: &str = "frames,phase,reads,writes,total,gain_factor,overhead_total";

/// Results CSV: a `pre` and a `post` row per point; the gain factor and
/// overhead appear on the `post` row only.
pub fn results_csv(points: &[PointResult]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},pre,{},{},{},,",
            p.frames,
            p.pre.reads,
            p.pre.writes,
            p.pre.total()
        );
        let _ = writeln!(
            out,
            "{},post,{},{},{},{},{}",
            p.frames,
            p.post.reads,
            p.post.writes,
            p.post.total(),
            format_gain(p.gain_factor),
            p.overhead.total()
        );
    }
    out
}

/// Per-iteration clustering reports.
pub fn clustering_csv(engine: EngineKind, iterations: &[IterationResult]) -> String {
    let mut out = format!("frames,iteration,engine,{}\n", EngineReport::CSV_HEADER);
    for r in iterations {
        let _ = writeln!(out, "{},{},{},{}", r.frames, r.iteration, engine, r.report.csv_row());
    }
    out
}

/// Parses a results CSV back into points. Overhead reads and writes are not
/// stored separately, so the parsed overhead carries its total in `reads`.
pub fn parse_results_csv(text: &str) -> Result<Vec<PointResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        Some((_, h)) => return Err(Error::parse(1, format!("unexpected header '{h}'"))),
        None => return Err(Error::parse(1, "empty results file")),
    }
    let mut points: BTreeMap<usize, PointResult> = BTreeMap::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(n, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(n, format!("bad number '{s}'"))) };
        let frames: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(n, format!("bad frames '{}'", f[0])))?;
        let phase = PhaseMean {
            reads: num(f[2])?,
            writes: num(f[3])?,
        };
        let p = points.entry(frames).or_insert_with(|| PointResult {
            frames,
            pre: PhaseMean::default(),
            post: PhaseMean::default(),
            overhead: PhaseMean::default(),
            gain_factor: 1.0,
        });
        match f[1] {
            "pre" => p.pre = phase,
            "post" => {
                p.post = phase;
                p.gain_factor = if f[5] == "inf" { f64::INFINITY } else { num(f[5])? };
                p.overhead = PhaseMean {
                    reads: num(f[6])?,
                    writes: 0.0,
                };
            }
            other => return Err(Error::parse(n, format!("unknown phase '{other}'"))),
        }
    }
    Ok(points.into_values().collect())
}

/// Whitespace-separated `frames value` series, one file per curve.
pub fn plot_series(points: &[PointResult]) -> Vec<(&'static str, String)> {
    // Same text as the CSV columns, so a report rebuilt from results.csv
    // reproduces these files exactly.
    type Column = fn(&PointResult) -> String;
    let series: [(&str, Column); 4] = [
        ("pre_io.dat", |p| p.pre.total().to_string()),
        ("post_io.dat", |p| p.post.total().to_string()),
        ("gain_factor.dat", |p| format_gain(p.gain_factor)),
        ("overhead_io.dat", |p| p.overhead.total().to_string()),
    ];
    series
        .iter()
        .map(|(name, f)| {
            let mut out = String::from("# frames value\n");
            for p in points {
                let _ = writeln!(out, "{} {}", p.frames, f(p));
            }
            (*name, out)
        })
        .collect()
}

/// Writes `results.csv` and the plot-data files into `dir`.
pub fn write_report(points: &[PointResult], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join("results.csv");
    fs::write(&csv, results_csv(points))?;
    written.push(csv);
    for (name, body) in plot_series(points) {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// I/O split of a workload run with automatic clustering.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggeredRun {
    pub workload: IoCounters,
    pub clustering: IoCounters,
    pub digest: u64,
    pub transactions: usize,
    pub reports: Vec<EngineReport>,
}

/// Runs the workload once, clustering automatically every `every`
/// transactions when set.
pub fn run_triggered(
    db: &mut Database,
    engine: &mut EngineState,
    spec: &WorkloadSpec,
    every: Option<usize>,
) -> Result<TriggeredRun> {
    let txs = workload::schedule(spec, db.store())?;
    let mut digest = Digest::default();
    let mut out = TriggeredRun {
        workload: IoCounters::default(),
        clustering: IoCounters::default(),
        digest: 0,
        transactions: txs.len(),
        reports: Vec::new(),
    };
    let chunk = every.unwrap_or(txs.len().max(1));
    for batch in txs.chunks(chunk) {
        let start = db.io_report();
        workload::run_transactions(db, engine, batch, spec.ref_slot, &mut digest)?;
        out.workload += db.io_report() - start;
        if every.is_some() {
            let report = engine.cluster(db, Trigger::Automatic)?;
            out.clustering += report.overhead();
            out.reports.push(report);
        }
    }
    out.digest = digest.finish();
    Ok(out)
}
