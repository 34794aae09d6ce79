//! Placement-order construction over the inter-object reference graph.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::store::{ObjectId, Store};

/// Outgoing references of an object, in slot order.
pub trait ReferenceGraph {
    fn references(&self, oid: ObjectId) -> &[ObjectId];
}

impl ReferenceGraph for Store {
    fn references(&self, oid: ObjectId) -> &[ObjectId] {
        self.object(oid).map_or(&[], |o| o.refs.as_slice())
    }
}

impl ReferenceGraph for BTreeMap<ObjectId, Vec<ObjectId>> {
    fn references(&self, oid: ObjectId) -> &[ObjectId] {
        self.get(&oid).map_or(&[], Vec::as_slice)
    }
}

/// `|a - b| / max(a, b)`.
pub fn dissimilarity(a: u64, b: u64) -> Result<f64> {
    let max = a.max(b);
    if max == 0 {
        return Err(Error::UndefinedDissimilarity);
    }
    Ok(a.abs_diff(b) as f64 / max as f64)
}

/// Sorts by descending access frequency, ties by ascending id.
pub fn rank_by_frequency(objects: &mut [(ObjectId, u64)]) {
    objects.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// A couple considered while growing a chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Examined {
    pub pass: u32,
    pub member: ObjectId,
    pub candidate: ObjectId,
    pub distance: u32,
    pub dissimilarity: f64,
    pub linked: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlacementOrder {
    /// Chains in creation order.
    pub sublists: Vec<Vec<ObjectId>>,
    /// Accepted (chain member, appended object) couples, in link order.
    pub links: Vec<(ObjectId, ObjectId)>,
}

impl PlacementOrder {
    pub fn concatenated(&self) -> Vec<ObjectId> {
        self.sublists.concat()
    }
}

/// Builds the placement order. `ranked` holds the tracked candidates with
/// their access frequencies, already in sort order; only they may be placed,
/// though any object may serve as a path intermediate.
pub fn order_placement(
    ranked: &[(ObjectId, u64)],
    graph: &impl ReferenceGraph,
    max_distance: u32,
    max_dissimilarity: f64,
) -> PlacementOrder {
    order_placement_traced(ranked, graph, max_distance, max_dissimilarity, |_| {})
}

pub fn order_placement_traced(
    ranked: &[(ObjectId, u64)],
    graph: &impl ReferenceGraph,
    max_distance: u32,
    max_dissimilarity: f64,
    mut on_examine: impl FnMut(Examined),
) -> PlacementOrder {
    let n = ranked.len();
    let index: HashMap<ObjectId, usize> = ranked.iter().enumerate().map(|(i, (o, _))| (*o, i)).collect();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut heads: Vec<usize> = Vec::new();
    let mut started = vec![false; n];
    let mut links = Vec::new();

    for pass in 1..=max_distance.max(1) {
        for start in 0..n {
            if prev[start].is_some() {
                continue;
            }
            if !started[start] {
                started[start] = true;
                heads.push(start);
            }
            loop {
                let chain = walk(start, &next);
                let in_chain: HashSet<usize> = chain.iter().copied().collect();
                let mut found = None;
                'members: for &m in &chain {
                    for (v, distance) in reachable(ranked[m].0, graph, pass) {
                        let Some(&u) = index.get(&v) else { continue };
                        if u == start || in_chain.contains(&u) {
                            continue;
                        }
                        let d = dissimilarity(ranked[m].1, ranked[u].1).expect("tracked objects have frequency >= 1");
                        let linked = prev[u].is_none() && d <= max_dissimilarity;
                        on_examine(Examined {
                            pass,
                            member: ranked[m].0,
                            candidate: v,
                            distance,
                            dissimilarity: d,
                            linked,
                        });
                        if linked {
                            found = Some((m, u));
                            break 'members;
                        }
                    }
                }
                let Some((m, u)) = found else { break };
                // Append u (and any chain it already heads) at the tail.
                let tail = *chain.last().expect("chain holds start");
                next[tail] = Some(u);
                prev[u] = Some(tail);
                links.push((ranked[m].0, ranked[u].0));
            }
        }
    }

    let sublists = heads
        .into_iter()
        .filter(|h| prev[*h].is_none())
        .map(|h| walk(h, &next).into_iter().map(|i| ranked[i].0).collect())
        .collect();
    PlacementOrder { sublists, links }
}

fn walk(head: usize, next: &[Option<usize>]) -> Vec<usize> {
    let mut chain = vec![head];
    let mut cur = head;
    while let Some(n) = next[cur] {
        chain.push(n);
        cur = n;
    }
    chain
}

/// Objects reachable from `from` within `max` hops, in breadth-first order
/// with slots visited in declaration order.
fn reachable(from: ObjectId, graph: &impl ReferenceGraph, max: u32) -> Vec<(ObjectId, u32)> {
    let mut seen = HashSet::from([from]);
    let mut queue = VecDeque::from([(from, 0u32)]);
    let mut out = Vec::new();
    while let Some((oid, depth)) = queue.pop_front() {
        if depth == max {
            continue;
        }
        for &r in graph.references(oid) {
            if seen.insert(r) {
                out.push((r, depth + 1));
                queue.push_back((r, depth + 1));
            }
        }
    }
    out
}

/// Fraction of the proposal already in place: the first object, plus every
/// object whose proposal predecessor sits physically right before it.
pub fn resemblance(proposal: &[ObjectId], store: &Store) -> Result<f64> {
    if proposal.is_empty() {
        return Err(Error::EmptyProposal);
    }
    let in_place = 1 + proposal.windows(2).filter(|w| store.is_adjacent(w[0], w[1])).count();
    Ok(in_place as f64 / proposal.len() as f64)
}
