//! Usage statistics for DRO clustering.
//!
//! Three record kinds: per-object access frequency and usage indicator,
//! per-page load count and usage rate, and page/object links carrying the
//! bytes an object occupies on a page. The store feeds them through
//! [`StoreObserver`] events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::store::{ObjectId, PageId, StoreObserver};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectStat {
    pub access_frequency: u64,
    /// Set on access, cleared when the object moves to another page.
    pub usage_indicator: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PageStat {
    /// Number of unloads seen for this page.
    pub nb_load: u64,
    /// Used bytes over page capacity, as of the latest unload.
    pub usage_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PurgeScope {
    All,
    Pages(BTreeSet<PageId>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatStore {
    page_capacity: u32,
    objects: BTreeMap<ObjectId, ObjectStat>,
    pages: BTreeMap<PageId, PageStat>,
    links: BTreeMap<(PageId, ObjectId), u32>,
    object_pages: BTreeMap<ObjectId, BTreeSet<PageId>>,
}

impl StatStore {
    pub fn new(page_capacity: u32) -> Self {
        Self {
            page_capacity,
            objects: BTreeMap::new(),
            pages: BTreeMap::new(),
            links: BTreeMap::new(),
            object_pages: BTreeMap::new(),
        }
    }

    pub fn object(&self, oid: ObjectId) -> Option<&ObjectStat> {
        self.objects.get(&oid)
    }

    pub fn page(&self, page: PageId) -> Option<&PageStat> {
        self.pages.get(&page)
    }

    pub fn objects(&self) -> impl Iterator<Item = (ObjectId, &ObjectStat)> {
        self.objects.iter().map(|(k, v)| (*k, v))
    }

    pub fn pages(&self) -> impl Iterator<Item = (PageId, &PageStat)> {
        self.pages.iter().map(|(k, v)| (*k, v))
    }

    pub fn links(&self) -> impl Iterator<Item = (PageId, ObjectId, u32)> + '_ {
        self.links.iter().map(|((p, o), s)| (*p, *o, *s))
    }

    pub fn link(&self, page: PageId, oid: ObjectId) -> Option<u32> {
        self.links.get(&(page, oid)).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.pages.is_empty() && self.links.is_empty()
    }

    /// Pages that have a page statistic.
    pub fn used_page_count(&self) -> usize {
        self.pages.len()
    }

    /// Pages unloaded at least once.
    pub fn pages_loaded(&self) -> usize {
        self.pages.values().filter(|p| p.nb_load > 0).count()
    }

    pub fn mean_usage_rate(&self) -> Option<f64> {
        if self.pages.is_empty() {
            return None;
        }
        Some(self.pages.values().map(|p| p.usage_rate).sum::<f64>() / self.pages.len() as f64)
    }

    pub fn record_access(&mut self, oid: ObjectId, page: PageId, size: u32) {
        let stat = self.objects.entry(oid).or_insert(ObjectStat {
            access_frequency: 0,
            usage_indicator: false,
        });
        stat.access_frequency += 1;
        stat.usage_indicator = true;
        self.pages.entry(page).or_default();
        self.links.insert((page, oid), size);
        self.object_pages.entry(oid).or_default().insert(page);
    }

    pub fn record_unload(&mut self, page: PageId, residents: &[(ObjectId, u32)]) {
        let used: u64 = residents
            .iter()
            .filter(|(oid, _)| self.objects.get(oid).is_some_and(|s| s.usage_indicator))
            .map(|(_, size)| u64::from(*size))
            .sum();
        let stat = self.pages.entry(page).or_default();
        stat.usage_rate = (used as f64 / f64::from(self.page_capacity)).min(1.0);
        stat.nb_load += 1;
    }

    pub fn record_delete(&mut self, oid: ObjectId) {
        if self.objects.remove(&oid).is_none() {
            return;
        }
        for page in self.object_pages.remove(&oid).unwrap_or_default() {
            self.links.remove(&(page, oid));
            if !self.page_has_links(page) {
                self.pages.remove(&page);
            }
        }
    }

    pub fn record_move(&mut self, oid: ObjectId, from: PageId) {
        let Some(stat) = self.objects.get_mut(&oid) else {
            return;
        };
        stat.usage_indicator = false;
        self.links.remove(&(from, oid));
        if let Some(pages) = self.object_pages.get_mut(&oid) {
            pages.remove(&from);
        }
    }

    /// Pages with usage rate below `min_usage_rate` and loaded more than
    /// `min_load_threshold` times.
    pub fn candidate_pages(&self, min_usage_rate: f64, min_load_threshold: f64) -> BTreeSet<PageId> {
        self.pages
            .iter()
            .filter(|(_, s)| s.usage_rate < min_usage_rate && s.nb_load as f64 > min_load_threshold)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn purge(&mut self, scope: &PurgeScope) {
        match scope {
            PurgeScope::All => {
                self.objects.clear();
                self.pages.clear();
                self.links.clear();
                self.object_pages.clear();
            }
            PurgeScope::Pages(pages) => {
                for &page in pages {
                    self.purge_page(page);
                }
            }
        }
    }

    fn purge_page(&mut self, page: PageId) {
        self.pages.remove(&page);
        let linked: Vec<ObjectId> = self.linked_objects(page).collect();
        for oid in linked {
            self.links.remove(&(page, oid));
            if let Some(pages) = self.object_pages.get_mut(&oid) {
                pages.remove(&page);
            }
        }
    }

    fn linked_objects(&self, page: PageId) -> impl Iterator<Item = ObjectId> + '_ {
        self.links
            .range((page, ObjectId(0))..=(page, ObjectId(u64::MAX)))
            .map(|((_, o), _)| *o)
    }

    fn page_has_links(&self, page: PageId) -> bool {
        self.linked_objects(page).next().is_some()
    }

    /// Referential integrity and value ranges.
    pub fn check_integrity(&self) -> Result<(), String> {
        for (page, oid) in self.links.keys() {
            if !self.objects.contains_key(oid) {
                return Err(format!("link ({page},{oid}) has no object stat"));
            }
            if !self.pages.contains_key(page) {
                return Err(format!("link ({page},{oid}) has no page stat"));
            }
            if !self.object_pages.get(oid).is_some_and(|p| p.contains(page)) {
                return Err(format!("link ({page},{oid}) missing from index"));
            }
        }
        let indexed: usize = self.object_pages.values().map(BTreeSet::len).sum();
        if indexed != self.links.len() {
            return Err("link index out of sync".into());
        }
        for (oid, s) in &self.objects {
            if s.access_frequency == 0 {
                return Err(format!("object {oid} has zero frequency"));
            }
        }
        for (page, s) in &self.pages {
            if !(0.0..=1.0).contains(&s.usage_rate) {
                return Err(format!("page {page} usage rate {} out of range", s.usage_rate));
            }
        }
        Ok(())
    }

    /// Diagnostic dump: `kind,id,field1,field2`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("kind,id,field1,field2\n");
        for (oid, s) in &self.objects {
            let _ = writeln!(
                out,
                "object,{oid},{},{}",
                s.access_frequency,
                u8::from(s.usage_indicator)
            );
        }
        for (page, s) in &self.pages {
            let _ = writeln!(out, "page,{page},{},{}", s.nb_load, s.usage_rate);
        }
        for ((page, oid), size) in &self.links {
            let _ = writeln!(out, "link,{page},{oid},{size}");
        }
        out
    }
}

impl StoreObserver for StatStore {
    fn on_access(&mut self, oid: ObjectId, page: PageId, size: u32) {
        self.record_access(oid, page, size);
    }

    fn on_unload(&mut self, page: PageId, residents: &[(ObjectId, u32)]) {
        self.record_unload(page, residents);
    }

    fn on_move(&mut self, oid: ObjectId, from: PageId, _to: PageId) {
        self.record_move(oid, from);
    }

    fn on_delete(&mut self, oid: ObjectId) {
        self.record_delete(oid);
    }

    fn on_page_freed(&mut self, page: PageId) {
        self.purge_page(page);
    }
}
