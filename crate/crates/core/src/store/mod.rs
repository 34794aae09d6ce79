//! Simulated paged object store.
//!
//! [`Store`] is the on-disk image: objects, fixed-capacity pages and the
//! object → (page, slot) placement map. [`Database`] couples a store with a
//! [`BufferPool`] and exact [`IoCounters`]; all I/O accounting happens there.
//!
//! Pages are grouped into extents, i.e. runs of physically contiguous pages.
//! Pages allocated by [`Store::insert_object`] form unclustered extents; every
//! relocation writes into a fresh extent that is registered as a cluster for
//! the LRU-C replacement policy and for cluster prefetch.

mod buffer;
mod database;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

pub use buffer::{BufferPool, ClusterKey, Policy};
pub use database::{Database, IoCounters, RelocationReport, StoreConfig, StoreObserver};
pub use snapshot::io_report_csv;

use crate::error::{Error, Result};

pub const DEFAULT_PAGE_CAPACITY: u32 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtentId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredObject {
    pub oid: ObjectId,
    pub class_id: u32,
    pub size: u32,
    /// Outgoing references; the slot index is meaningful.
    pub refs: Vec<ObjectId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Page {
    pub id: PageId,
    pub extent: ExtentId,
    pub slots: Vec<ObjectId>,
    pub used_bytes: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub page: PageId,
    pub slot: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Extent {
    pages: Vec<PageId>,
    clustered: bool,
}

/// Outcome of [`Store::relocate`]; I/O is charged by the caller.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelocationPlan {
    /// Moved objects with their source page.
    pub moved: Vec<(ObjectId, PageId)>,
    pub sources: BTreeSet<PageId>,
    pub destinations: Vec<PageId>,
    /// Source pages left empty and released.
    pub freed: Vec<PageId>,
    pub extent: Option<ExtentId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Store {
    page_capacity: u32,
    objects: BTreeMap<ObjectId, StoredObject>,
    pages: BTreeMap<PageId, Page>,
    placement: HashMap<ObjectId, Placement>,
    extents: BTreeMap<ExtentId, Extent>,
    next_oid: u64,
    next_page: u64,
    next_extent: u64,
    insert_tail: Option<PageId>,
}

impl Store {
    pub fn new(page_capacity: u32) -> Result<Self> {
        if page_capacity == 0 {
            return Err(Error::config("page capacity must be positive"));
        }
        Ok(Self {
            page_capacity,
            objects: BTreeMap::new(),
            pages: BTreeMap::new(),
            placement: HashMap::new(),
            extents: BTreeMap::new(),
            next_oid: 1,
            next_page: 1,
            next_extent: 1,
            insert_tail: None,
        })
    }

    pub fn page_capacity(&self) -> u32 {
        self.page_capacity
    }

    pub fn object(&self, oid: ObjectId) -> Option<&StoredObject> {
        self.objects.get(&oid)
    }

    pub fn objects(&self) -> impl Iterator<Item = &StoredObject> {
        self.objects.values()
    }

    pub fn object_ids(&self) -> Vec<ObjectId> {
        self.objects.keys().copied().collect()
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn contains(&self, oid: ObjectId) -> bool {
        self.objects.contains_key(&oid)
    }

    pub fn placement(&self, oid: ObjectId) -> Option<Placement> {
        self.placement.get(&oid).copied()
    }

    pub fn page(&self, id: PageId) -> Option<&Page> {
        self.pages.get(&id)
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.pages.values()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.objects.values().map(|o| u64::from(o.size)).sum()
    }

    /// Resident objects of a page with their sizes, in slot order.
    pub fn page_contents(&self, id: PageId) -> Vec<(ObjectId, u32)> {
        self.pages
            .get(&id)
            .map(|p| p.slots.iter().map(|oid| (*oid, self.objects[oid].size)).collect())
            .unwrap_or_default()
    }

    /// Appends an object to the insertion tail page, opening a new page when
    /// it does not fit.
    pub fn insert_object(&mut self, class_id: u32, size: u32, refs: Vec<ObjectId>) -> Result<ObjectId> {
        if size == 0 {
            return Err(Error::config("object size must be positive"));
        }
        if size > self.page_capacity {
            return Err(Error::OversizeObject {
                size,
                capacity: self.page_capacity,
            });
        }
        let oid = ObjectId(self.next_oid);
        if let Some(&to) = refs.iter().find(|r| !self.objects.contains_key(r) && **r != oid) {
            return Err(Error::DanglingReference { from: oid, to });
        }
        self.next_oid += 1;

        let tail = self.insert_tail.filter(|t| {
            self.pages
                .get(t)
                .is_some_and(|p| p.used_bytes + size <= self.page_capacity)
        });
        let page_id = match tail {
            Some(t) => t,
            None => {
                // Continue the tail's extent only if nothing was allocated after it.
                let extent = match self.insert_tail {
                    Some(t) if t.0 + 1 == self.next_page && self.pages.contains_key(&t) => self.pages[&t].extent,
                    _ => self.new_extent(false),
                };
                let id = self.allocate_page(extent);
                self.insert_tail = Some(id);
                id
            }
        };
        let page = self.pages.get_mut(&page_id).expect("tail page exists");
        page.slots.push(oid);
        page.used_bytes += size;
        let slot = page.slots.len() - 1;
        self.placement.insert(oid, Placement { page: page_id, slot });
        self.objects.insert(
            oid,
            StoredObject {
                oid,
                class_id,
                size,
                refs,
            },
        );
        Ok(oid)
    }

    pub fn set_refs(&mut self, oid: ObjectId, refs: Vec<ObjectId>) -> Result<()> {
        if !self.objects.contains_key(&oid) {
            return Err(Error::NotFound(oid));
        }
        if let Some(&to) = refs.iter().find(|r| !self.objects.contains_key(r)) {
            return Err(Error::DanglingReference { from: oid, to });
        }
        self.objects.get_mut(&oid).expect("checked").refs = refs;
        Ok(())
    }

    /// Removes an object that no other object references. Returns the page it
    /// occupied and whether that page was released.
    pub fn delete_object(&mut self, oid: ObjectId) -> Result<(PageId, bool)> {
        if !self.objects.contains_key(&oid) {
            return Err(Error::NotFound(oid));
        }
        if self.objects.values().any(|o| o.oid != oid && o.refs.contains(&oid)) {
            return Err(Error::StillReferenced(oid));
        }
        let page = self.detach(oid);
        self.objects.remove(&oid);
        let freed = self.release_if_empty(page);
        Ok((page, freed))
    }

    /// Cluster identity of a page for LRU-C and prefetch. Pages outside a
    /// relocation extent are singleton clusters.
    pub fn cluster_of(&self, page: PageId) -> ClusterKey {
        match self.pages.get(&page) {
            Some(p) if self.extents[&p.extent].clustered => ClusterKey::Extent(p.extent),
            _ => ClusterKey::Page(page),
        }
    }

    /// Pages of the cluster containing `page`, in physical order.
    pub fn cluster_pages(&self, page: PageId) -> Vec<PageId> {
        match self.cluster_of(page) {
            ClusterKey::Extent(e) => self.extents[&e].pages.clone(),
            ClusterKey::Page(p) => vec![p],
        }
    }

    /// True when `next` immediately follows `prev` on disk: next slot of the
    /// same page, or first slot of the following page of the same extent.
    pub fn is_adjacent(&self, prev: ObjectId, next: ObjectId) -> bool {
        let (Some(a), Some(b)) = (self.placement(prev), self.placement(next)) else {
            return false;
        };
        if a.page == b.page {
            return a.slot + 1 == b.slot;
        }
        let pa = &self.pages[&a.page];
        let pb = &self.pages[&b.page];
        if b.slot != 0 || a.slot + 1 != pa.slots.len() || pa.extent != pb.extent {
            return false;
        }
        let order = &self.extents[&pa.extent].pages;
        order.windows(2).any(|w| w[0] == a.page && w[1] == b.page)
    }

    /// True when the sequence already sits contiguously on disk in this order.
    pub fn is_laid_out(&self, ordered: &[ObjectId]) -> bool {
        ordered.windows(2).all(|w| self.is_adjacent(w[0], w[1]))
    }

    /// Writes `ordered` sequentially into a fresh extent, compacting the
    /// vacated source slots. A sequence already laid out contiguously is left
    /// untouched.
    pub fn relocate(&mut self, ordered: &[ObjectId]) -> Result<RelocationPlan> {
        let mut seen = BTreeSet::new();
        for &oid in ordered {
            if !self.objects.contains_key(&oid) {
                return Err(Error::NotFound(oid));
            }
            if !seen.insert(oid) {
                return Err(Error::DuplicateInProposal(oid));
            }
        }
        if ordered.is_empty() || self.is_laid_out(ordered) {
            return Ok(RelocationPlan::default());
        }

        let mut plan = RelocationPlan::default();
        for &oid in ordered {
            let page = self.detach(oid);
            plan.moved.push((oid, page));
            plan.sources.insert(page);
        }
        for &page in &plan.sources {
            if self.release_if_empty(page) {
                plan.freed.push(page);
            }
        }

        let extent = self.new_extent(true);
        plan.extent = Some(extent);
        let mut current = self.allocate_page(extent);
        plan.destinations.push(current);
        for &oid in ordered {
            let size = self.objects[&oid].size;
            if self.pages[&current].used_bytes + size > self.page_capacity {
                current = self.allocate_page(extent);
                plan.destinations.push(current);
            }
            let page = self.pages.get_mut(&current).expect("allocated");
            page.slots.push(oid);
            page.used_bytes += size;
            self.placement.insert(
                oid,
                Placement {
                    page: current,
                    slot: page.slots.len() - 1,
                },
            );
        }
        Ok(plan)
    }

    /// Checks the placement bijection and capacity invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = 0usize;
        for page in self.pages.values() {
            if page.slots.is_empty() {
                return Err(format!("page {} is empty", page.id));
            }
            let mut used = 0u32;
            for (slot, oid) in page.slots.iter().enumerate() {
                let obj = self
                    .objects
                    .get(oid)
                    .ok_or(format!("page {} holds unknown {oid}", page.id))?;
                used += obj.size;
                if self.placement.get(oid) != Some(&Placement { page: page.id, slot }) {
                    return Err(format!("placement of {oid} disagrees with page {}", page.id));
                }
                seen += 1;
            }
            if used != page.used_bytes || used > self.page_capacity {
                return Err(format!("page {} byte accounting broken", page.id));
            }
            if !self
                .extents
                .get(&page.extent)
                .is_some_and(|e| e.pages.contains(&page.id))
            {
                return Err(format!("page {} missing from its extent", page.id));
            }
        }
        if seen != self.objects.len() || self.placement.len() != self.objects.len() {
            return Err("objects and placement differ in size".into());
        }
        for obj in self.objects.values() {
            if let Some(r) = obj.refs.iter().find(|r| !self.objects.contains_key(r)) {
                return Err(format!("{} has dangling reference {r}", obj.oid));
            }
        }
        Ok(())
    }

    fn new_extent(&mut self, clustered: bool) -> ExtentId {
        let id = ExtentId(self.next_extent);
        self.next_extent += 1;
        self.extents.insert(
            id,
            Extent {
                pages: Vec::new(),
                clustered,
            },
        );
        id
    }

    fn allocate_page(&mut self, extent: ExtentId) -> PageId {
        let id = PageId(self.next_page);
        self.next_page += 1;
        self.pages.insert(
            id,
            Page {
                id,
                extent,
                slots: Vec::new(),
                used_bytes: 0,
            },
        );
        self.extents.get_mut(&extent).expect("extent exists").pages.push(id);
        id
    }

    /// Removes an object from its page and compacts the remaining slots.
    fn detach(&mut self, oid: ObjectId) -> PageId {
        let at = self.placement.remove(&oid).expect("placed object");
        let size = self.objects[&oid].size;
        let page = self.pages.get_mut(&at.page).expect("placed page");
        page.slots.remove(at.slot);
        page.used_bytes -= size;
        for (slot, other) in page.slots.iter().enumerate().skip(at.slot) {
            self.placement.insert(*other, Placement { page: at.page, slot });
        }
        at.page
    }

    fn release_if_empty(&mut self, id: PageId) -> bool {
        if !self.pages.get(&id).is_some_and(|p| p.slots.is_empty()) {
            return false;
        }
        let page = self.pages.remove(&id).expect("checked");
        let extent = self.extents.get_mut(&page.extent).expect("extent exists");
        extent.pages.retain(|p| *p != id);
        if extent.pages.is_empty() {
            self.extents.remove(&page.extent);
        }
        true
    }

    /// Rebuilds a store from explicit placements; used by snapshot restore.
    /// All pages land in one unclustered extent in page-id order.
    fn from_parts(page_capacity: u32, rows: Vec<(StoredObject, Placement)>) -> Result<Self, String> {
        let mut store = Store::new(page_capacity).map_err(|e| e.to_string())?;
        let base = if rows.is_empty() {
            None
        } else {
            Some(store.new_extent(false))
        };
        let mut pages: BTreeMap<PageId, Vec<(usize, ObjectId)>> = BTreeMap::new();
        for (obj, at) in rows {
            if obj.size == 0 || obj.size > page_capacity {
                return Err(format!("object {} has invalid size {}", obj.oid, obj.size));
            }
            if store.objects.insert(obj.oid, obj.clone()).is_some() {
                return Err(format!("object {} appears twice", obj.oid));
            }
            store.placement.insert(obj.oid, at);
            pages.entry(at.page).or_default().push((at.slot, obj.oid));
        }
        for (id, mut slots) in pages {
            slots.sort();
            if slots.iter().enumerate().any(|(i, (s, _))| *s != i) {
                return Err(format!("page {id} has non-contiguous slots"));
            }
            let used: u32 = slots.iter().map(|(_, oid)| store.objects[oid].size).sum();
            if used > page_capacity {
                return Err(format!("page {id} exceeds capacity"));
            }
            let extent = base.expect("non-empty");
            store.pages.insert(
                id,
                Page {
                    id,
                    extent,
                    slots: slots.into_iter().map(|(_, o)| o).collect(),
                    used_bytes: used,
                },
            );
            store.extents.get_mut(&extent).expect("base").pages.push(id);
        }
        store.next_oid = store.objects.keys().last().map_or(1, |o| o.0 + 1);
        store.next_page = store.pages.keys().last().map_or(1, |p| p.0 + 1);
        store.insert_tail = store.pages.keys().last().copied();
        store.check_invariants()?;
        Ok(store)
    }
}
