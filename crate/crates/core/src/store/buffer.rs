use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{ExtentId, PageId};
use crate::error::Error;

/// Page replacement policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Policy {
    #[default]
    Lru,
    /// Dates clusters rather than pages: the victim is the least recently
    /// used page of the least recently used cluster, a cluster's date being
    /// the latest use of any of its resident pages.
    LruC,
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lru" => Ok(Policy::Lru),
            "lru-c" | "lruc" => Ok(Policy::LruC),
            other => Err(Error::config(format!("unknown policy '{other}'"))),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Lru => "lru",
            Policy::LruC => "lru-c",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterKey {
    Extent(ExtentId),
    Page(PageId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Frame {
    last_use: u64,
    dirty: bool,
}

/// Fixed-size frame pool. Tracks residency and replacement metadata only;
/// the owning [`super::Database`] charges the I/O.
#[derive(Clone, Debug)]
pub struct BufferPool {
    frames: usize,
    policy: Policy,
    prefetch: bool,
    tick: u64,
    resident: BTreeMap<PageId, Frame>,
}

impl BufferPool {
    pub fn new(frames: usize, policy: Policy, prefetch: bool) -> Self {
        Self {
            frames,
            policy,
            prefetch,
            tick: 0,
            resident: BTreeMap::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn prefetch(&self) -> bool {
        self.prefetch
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.resident.len() >= self.frames
    }

    pub fn contains(&self, page: PageId) -> bool {
        self.resident.contains_key(&page)
    }

    pub fn is_dirty(&self, page: PageId) -> bool {
        self.resident.get(&page).is_some_and(|f| f.dirty)
    }

    pub fn resident_pages(&self) -> impl Iterator<Item = PageId> + '_ {
        self.resident.keys().copied()
    }

    pub(crate) fn touch(&mut self, page: PageId) {
        self.tick += 1;
        if let Some(frame) = self.resident.get_mut(&page) {
            frame.last_use = self.tick;
        }
    }

    pub(crate) fn admit(&mut self, page: PageId) {
        debug_assert!(!self.is_full());
        self.tick += 1;
        self.resident.insert(
            page,
            Frame {
                last_use: self.tick,
                dirty: false,
            },
        );
    }

    pub(crate) fn set_dirty(&mut self, page: PageId, dirty: bool) {
        if let Some(frame) = self.resident.get_mut(&page) {
            frame.dirty = dirty;
        }
    }

    /// Drops a page, returning whether it was dirty.
    pub(crate) fn remove(&mut self, page: PageId) -> Option<bool> {
        self.resident.remove(&page).map(|f| f.dirty)
    }

    /// Chooses the page to evict next.
    pub fn victim(&self, cluster_of: impl Fn(PageId) -> ClusterKey) -> Option<PageId> {
        match self.policy {
            Policy::Lru => self.resident.iter().min_by_key(|(_, f)| f.last_use).map(|(p, _)| *p),
            Policy::LruC => {
                let mut dates: BTreeMap<ClusterKey, u64> = BTreeMap::new();
                for (page, frame) in &self.resident {
                    let date = dates.entry(cluster_of(*page)).or_insert(0);
                    *date = (*date).max(frame.last_use);
                }
                let (cluster, _) = dates.iter().min_by_key(|(_, d)| **d)?;
                self.resident
                    .iter()
                    .filter(|(p, _)| cluster_of(**p) == *cluster)
                    .min_by_key(|(_, f)| f.last_use)
                    .map(|(p, _)| *p)
            }
        }
    }
}
