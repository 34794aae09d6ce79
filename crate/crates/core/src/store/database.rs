use std::collections::BTreeSet;
use std::ops::{Add, AddAssign, Sub};

use super::{BufferPool, ExtentId, ObjectId, PageId, Policy, Store, StoredObject, DEFAULT_PAGE_CAPACITY};
use crate::error::{Error, Result};

/// Page read/write tallies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct IoCounters {
    pub page_reads: u64,
    pub page_writes: u64,
}

impl IoCounters {
    pub fn new(page_reads: u64, page_writes: u64) -> Self {
        Self {
            page_reads,
            page_writes,
        }
    }

    pub fn total(&self) -> u64 {
        self.page_reads + self.page_writes
    }
}

impl Add for IoCounters {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.page_reads + rhs.page_reads, self.page_writes + rhs.page_writes)
    }
}

impl AddAssign for IoCounters {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for IoCounters {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self::new(self.page_reads - rhs.page_reads, self.page_writes - rhs.page_writes)
    }
}

/// Receives store events. Every method defaults to a no-op.
pub trait StoreObserver {
    fn on_access(&mut self, _oid: ObjectId, _page: PageId, _size: u32) {}

    /// A page left the buffer; `residents` lists its objects with sizes.
    fn on_unload(&mut self, _page: PageId, _residents: &[(ObjectId, u32)]) {}

    fn on_move(&mut self, _oid: ObjectId, _from: PageId, _to: PageId) {}

    fn on_delete(&mut self, _oid: ObjectId) {}

    fn on_page_freed(&mut self, _page: PageId) {}

    /// A traversal followed the reference `from → to`. Emitted by workload
    /// drivers, never by the store itself.
    fn on_traverse(&mut self, _from: ObjectId, _to: ObjectId) {}
}

impl StoreObserver for () {}

impl<T: StoreObserver + ?Sized> StoreObserver for &mut T {
    fn on_access(&mut self, oid: ObjectId, page: PageId, size: u32) {
        (**self).on_access(oid, page, size)
    }
    fn on_unload(&mut self, page: PageId, residents: &[(ObjectId, u32)]) {
        (**self).on_unload(page, residents)
    }
    fn on_move(&mut self, oid: ObjectId, from: PageId, to: PageId) {
        (**self).on_move(oid, from, to)
    }
    fn on_delete(&mut self, oid: ObjectId) {
        (**self).on_delete(oid)
    }
    fn on_page_freed(&mut self, page: PageId) {
        (**self).on_page_freed(page)
    }
    fn on_traverse(&mut self, from: ObjectId, to: ObjectId) {
        (**self).on_traverse(from, to)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreConfig {
    pub page_capacity: u32,
    pub frames: usize,
    pub policy: Policy,
    pub prefetch: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            page_capacity: DEFAULT_PAGE_CAPACITY,
            frames: 8,
            policy: Policy::Lru,
            prefetch: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelocationReport {
    pub moved: Vec<ObjectId>,
    pub sources: BTreeSet<PageId>,
    pub destinations: Vec<PageId>,
    pub freed: Vec<PageId>,
    pub cluster: Option<ExtentId>,
    pub io: IoCounters,
}

impl RelocationReport {
    pub fn touched_pages(&self) -> BTreeSet<PageId> {
        self.sources.iter().chain(&self.destinations).copied().collect()
    }

    pub fn absorb(&mut self, other: RelocationReport) {
        self.moved.extend(other.moved);
        self.sources.extend(other.sources);
        self.destinations.extend(other.destinations);
        self.freed.extend(other.freed);
        self.cluster = other.cluster.or(self.cluster);
        self.io += other.io;
    }
}

/// A store, its buffer pool and the I/O counters. Single owner; every
/// mutating operation takes `&mut self`.
#[derive(Clone, Debug)]
pub struct Database {
    store: Store,
    buffer: BufferPool,
    io: IoCounters,
}

impl Database {
    pub fn create(config: StoreConfig) -> Result<Self> {
        Self::with_store(Store::new(config.page_capacity)?, config)
    }

    /// Wraps an existing store; the page capacity in `config` is ignored.
    pub fn with_store(store: Store, config: StoreConfig) -> Result<Self> {
        if config.frames == 0 {
            return Err(Error::config("buffer needs at least one frame"));
        }
        Ok(Self {
            store,
            buffer: BufferPool::new(config.frames, config.policy, config.prefetch),
            io: IoCounters::default(),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn buffer(&self) -> &BufferPool {
        &self.buffer
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn io_report(&self) -> IoCounters {
        self.io
    }

    pub fn reset_io(&mut self) {
        self.io = IoCounters::default();
    }

    /// Inserts without I/O (bulk load). A resident destination page becomes
    /// dirty.
    pub fn insert_object(&mut self, class_id: u32, size: u32, refs: Vec<ObjectId>) -> Result<ObjectId> {
        let oid = self.store.insert_object(class_id, size, refs)?;
        let page = self.store.placement(oid).expect("just placed").page;
        self.buffer.set_dirty(page, true);
        Ok(oid)
    }

    pub fn delete_object(&mut self, oid: ObjectId, obs: &mut impl StoreObserver) -> Result<()> {
        let (page, freed) = self.store.delete_object(oid)?;
        obs.on_delete(oid);
        if freed {
            self.buffer.remove(page);
            obs.on_page_freed(page);
        } else {
            self.buffer.set_dirty(page, true);
        }
        Ok(())
    }

    /// Reads an object, fetching its page (and, with prefetch on, the rest of
    /// its cluster) on a miss.
    pub fn access(&mut self, oid: ObjectId, obs: &mut impl StoreObserver) -> Result<&StoredObject> {
        let page = self.store.placement(oid).ok_or(Error::NotFound(oid))?.page;
        if self.buffer.prefetch() {
            let others: Vec<PageId> = self
                .store
                .cluster_pages(page)
                .into_iter()
                .filter(|p| *p != page)
                .take(self.buffer.frames() - 1)
                .collect();
            for other in others {
                if !self.buffer.contains(other) {
                    self.fetch(other, obs);
                }
            }
        }
        self.fetch(page, obs);
        let obj = &self.store.objects[&oid];
        obs.on_access(oid, page, obj.size);
        Ok(obj)
    }

    /// Reads an object and marks its page dirty.
    pub fn update(&mut self, oid: ObjectId, obs: &mut impl StoreObserver) -> Result<()> {
        self.access(oid, obs)?;
        let page = self.store.placement(oid).expect("accessed").page;
        self.buffer.set_dirty(page, true);
        Ok(())
    }

    fn fetch(&mut self, page: PageId, obs: &mut impl StoreObserver) {
        if self.buffer.contains(page) {
            self.buffer.touch(page);
            return;
        }
        while self.buffer.is_full() {
            self.evict(obs);
        }
        self.buffer.admit(page);
        self.io.page_reads += 1;
    }

    /// Evicts the policy's victim, writing it back if dirty. No-op on an
    /// empty buffer.
    pub fn evict(&mut self, obs: &mut impl StoreObserver) -> Option<PageId> {
        let store = &self.store;
        let victim = self.buffer.victim(|p| store.cluster_of(p))?;
        if self.buffer.remove(victim) == Some(true) {
            self.io.page_writes += 1;
        }
        obs.on_unload(victim, &self.store.page_contents(victim));
        Some(victim)
    }

    /// Evicts every resident page in policy order.
    pub fn flush(&mut self, obs: &mut impl StoreObserver) {
        while self.evict(obs).is_some() {}
    }

    /// Writes `ordered` contiguously into a fresh extent registered as a
    /// cluster. Relocation bypasses the buffer: each non-resident source page
    /// costs one read, each modified source page and each destination page
    /// one write.
    pub fn rewrite_placement(
        &mut self,
        ordered: &[ObjectId],
        obs: &mut impl StoreObserver,
    ) -> Result<RelocationReport> {
        let sources: BTreeSet<PageId> = ordered
            .iter()
            .filter_map(|oid| self.store.placement(*oid).map(|p| p.page))
            .collect();
        let plan = self.store.relocate(ordered)?;
        if plan.moved.is_empty() {
            return Ok(RelocationReport::default());
        }
        debug_assert_eq!(sources, plan.sources);

        let mut io = IoCounters::default();
        for &page in &plan.sources {
            if !self.buffer.contains(page) {
                io.page_reads += 1;
            }
            io.page_writes += 1;
            self.buffer.set_dirty(page, false);
        }
        io.page_writes += plan.destinations.len() as u64;
        self.io += io;

        for &(oid, from) in &plan.moved {
            let to = self.store.placement(oid).expect("relocated").page;
            obs.on_move(oid, from, to);
        }
        for &page in &plan.freed {
            self.buffer.remove(page);
            obs.on_page_freed(page);
        }
        Ok(RelocationReport {
            moved: plan.moved.iter().map(|(o, _)| *o).collect(),
            sources: plan.sources,
            destinations: plan.destinations,
            freed: plan.freed,
            cluster: plan.extent,
            io,
        })
    }
}
