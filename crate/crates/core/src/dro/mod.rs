//! DRO (detection and reclustering of objects).
//!
//! A clustering run flushes the buffer so that page statistics are final,
//! then goes through four steps, any of which may stop the run:
//!
//! 1. select pages with a low usage rate that were loaded often enough, and
//!    the tracked objects on them; abort unless enough pages qualify;
//! 2. build a placement order by linking objects with similar access
//!    frequencies along reference paths, and measure how much of it is
//!    already in place (resemblance);
//! 3. rewrite the objects contiguously unless the layout already resembles
//!    the proposal;
//! 4. purge statistics, either entirely or for the touched pages.

mod placement;

use std::collections::BTreeSet;
use std::fmt;

pub use placement::{
    dissimilarity, order_placement, order_placement_traced, rank_by_frequency, resemblance, Examined, PlacementOrder,
    ReferenceGraph,
};

use crate::config::{self, ApplyKey};
use crate::error::{Error, Result};
use crate::stats::{PurgeScope, StatStore};
use crate::store::{Database, IoCounters, ObjectId, PageId, RelocationReport, Store};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DroParams {
    /// `MinUR`: pages used below this rate are candidates.
    pub min_usage_rate: f64,
    /// `MinLT`: candidates must have been loaded strictly more often.
    pub min_load_threshold: f64,
    /// `PCRate`: candidate pages over used pages must exceed this.
    pub page_clustering_rate: f64,
    /// `MaxD`: longest reference path followed when linking.
    pub max_distance: u32,
    /// `MaxDR`: largest dissimilarity accepted when linking.
    pub max_dissimilarity: f64,
    /// `MaxRR`: relocation happens only below this resemblance.
    pub max_resemblance: f64,
    /// `SUInd`: purge every statistic after clustering, not only the
    /// touched pages.
    pub purge_all_statistics: bool,
}

impl Default for DroParams {
    fn default() -> Self {
        Self {
            min_usage_rate: 0.8,
            min_load_threshold: 1.0,
            page_clustering_rate: 0.05,
            max_distance: 1,
            max_dissimilarity: 0.05,
            max_resemblance: 0.9,
            purge_all_statistics: true,
        }
    }
}

impl DroParams {
    pub fn validate(&self) -> Result<()> {
        config::unit_interval("MinUR", self.min_usage_rate)?;
        config::unit_interval("PCRate", self.page_clustering_rate)?;
        config::unit_interval("MaxDR", self.max_dissimilarity)?;
        config::unit_interval("MaxRR", self.max_resemblance)?;
        if self.max_distance == 0 {
            return Err(Error::config("MaxD must be at least 1"));
        }
        if self.min_load_threshold < 0.0 {
            return Err(Error::config("MinLT must be non-negative"));
        }
        Ok(())
    }
}

impl ApplyKey for DroParams {
    fn apply_key(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "MinUR" => self.min_usage_rate = config::value(key, v)?,
            "MinLT" => self.min_load_threshold = config::value(key, v)?,
            "PCRate" => self.page_clustering_rate = config::value(key, v)?,
            "MaxD" => self.max_distance = config::value(key, v)?,
            "MaxDR" => self.max_dissimilarity = config::value(key, v)?,
            "MaxRR" => self.max_resemblance = config::value(key, v)?,
            "SUInd" => self.purge_all_statistics = config::flag(key, v)?,
            _ => return Ok(false),
        }
        self.validate()?;
        Ok(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Trigger {
    #[default]
    Manual,
    Automatic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// No candidate objects.
    AbortedStep1,
    /// Candidates exist but too few pages qualify.
    AbortedGate,
    /// Current layout already resembles the proposal.
    SkippedResemblance,
    Applied,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::AbortedStep1 => "aborted_step1",
            Outcome::AbortedGate => "aborted_gate",
            Outcome::SkippedResemblance => "skipped_resemblance",
            Outcome::Applied => "applied",
        })
    }
}

/// Step-1 result: candidate pages, their tracked objects ranked by
/// frequency, and whether the gate lets clustering proceed.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub pages: BTreeSet<PageId>,
    pub objects: Vec<(ObjectId, u64)>,
    pub used_pages: usize,
    pub proceed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterProposal {
    pub order: Vec<ObjectId>,
    pub sublists: Vec<Vec<ObjectId>>,
    pub resemblance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringReport {
    pub outcome: Outcome,
    pub trigger: Trigger,
    pub candidate_pages: usize,
    pub candidate_objects: usize,
    pub proposal: Option<ClusterProposal>,
    pub moved: usize,
    pub overhead: IoCounters,
}

impl ClusteringReport {
    pub const CSV_HEADER: &'static str =
        "outcome,cand_pages,cand_objects,resemblance,moved,overhead_reads,overhead_writes";

    pub fn resemblance(&self) -> Option<f64> {
        self.proposal.as_ref().map(|p| p.resemblance)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.outcome,
            self.candidate_pages,
            self.candidate_objects,
            self.resemblance().map(|r| r.to_string()).unwrap_or_default(),
            self.moved,
            self.overhead.page_reads,
            self.overhead.page_writes
        )
    }
}

pub fn step1_select(stats: &StatStore, store: &Store, params: &DroParams) -> Selection {
    let pages = stats.candidate_pages(params.min_usage_rate, params.min_load_threshold);
    let mut objects: Vec<(ObjectId, u64)> = pages
        .iter()
        .filter_map(|p| store.page(*p))
        .flat_map(|p| p.slots.iter())
        .filter_map(|oid| stats.object(*oid).map(|s| (*oid, s.access_frequency)))
        .collect();
    rank_by_frequency(&mut objects);
    let used_pages = stats.used_page_count();
    let proceed =
        pages.len() > 1 && used_pages > 0 && pages.len() as f64 / used_pages as f64 > params.page_clustering_rate;
    Selection {
        pages,
        objects,
        used_pages,
        proceed,
    }
}

pub fn step2_order(selection: &Selection, graph: &impl ReferenceGraph, params: &DroParams) -> PlacementOrder {
    order_placement(&selection.objects, graph, params.max_distance, params.max_dissimilarity)
}

/// Relocates the proposal when its resemblance is strictly below `MaxRR`.
pub fn step3_apply(
    proposal: &ClusterProposal,
    db: &mut Database,
    stats: &mut StatStore,
    params: &DroParams,
) -> Result<Option<RelocationReport>> {
    if proposal.resemblance >= params.max_resemblance {
        return Ok(None);
    }
    db.rewrite_placement(&proposal.order, stats).map(Some)
}

pub fn step4_update(stats: &mut StatStore, params: &DroParams, relocation: &RelocationReport) {
    if params.purge_all_statistics {
        stats.purge(&PurgeScope::All);
    } else {
        stats.purge(&PurgeScope::Pages(relocation.touched_pages()));
    }
}

/// Runs a complete clustering pass. The reported overhead covers every I/O
/// from the initial flush to the end of relocation.
pub fn run(db: &mut Database, stats: &mut StatStore, params: &DroParams, trigger: Trigger) -> Result<ClusteringReport> {
    params.validate()?;
    let start = db.io_report();
    db.flush(stats);

    let selection = step1_select(stats, db.store(), params);
    let mut report = ClusteringReport {
        outcome: Outcome::AbortedStep1,
        trigger,
        candidate_pages: selection.pages.len(),
        candidate_objects: selection.objects.len(),
        proposal: None,
        moved: 0,
        overhead: IoCounters::default(),
    };
    if selection.objects.is_empty() {
        report.overhead = db.io_report() - start;
        return Ok(report);
    }
    if !selection.proceed {
        report.outcome = Outcome::AbortedGate;
        report.overhead = db.io_report() - start;
        return Ok(report);
    }

    let order = step2_order(&selection, db.store(), params);
    let sequence = order.concatenated();
    let proposal = ClusterProposal {
        resemblance: resemblance(&sequence, db.store())?,
        order: sequence,
        sublists: order.sublists,
    };

    match step3_apply(&proposal, db, stats, params)? {
        None => report.outcome = Outcome::SkippedResemblance,
        Some(relocation) => {
            step4_update(stats, params, &relocation);
            report.outcome = Outcome::Applied;
            report.moved = relocation.moved.len();
        }
    }
    report.proposal = Some(proposal);
    report.overhead = db.io_report() - start;
    Ok(report)
}
