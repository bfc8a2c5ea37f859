//! Block distribution of a graph over virtual workers, ghost label caches
//! and block-weight bookkeeping.
//!
//! Worker `w` owns the contiguous range `[w*n/V, (w+1)*n/V)`. Its local index
//! space lists owned vertices first, followed by ghost vertices (non-owned
//! endpoints of owned edges) in ascending global order. Label changes of
//! interface vertices are queued per adjacent worker and delivered by
//! [`phase_exchange`] at the next phase boundary.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::graphio::Graph;

/// The part of a distributed graph held by one worker.
#[derive(Debug, Clone)]
pub struct LocalPart {
    worker: usize,
    range: Range<u32>,
    xadj: Vec<usize>,
    adj: Vec<u32>,
    ewgt: Vec<u64>,
    vwgt: Vec<u64>,
    ghosts: Vec<u32>,
    ghost_owner: Vec<u32>,
    iface_xadj: Vec<usize>,
    iface_to: Vec<u32>,
}

impl LocalPart {
    pub fn worker(&self) -> usize {
        self.worker
    }

    /// Owned global range.
    pub fn range(&self) -> Range<u32> {
        self.range.clone()
    }

    pub fn num_owned(&self) -> usize {
        (self.range.end - self.range.start) as usize
    }

    /// Owned plus ghost vertices.
    pub fn num_local(&self) -> usize {
        self.num_owned() + self.ghosts.len()
    }

    /// Ghost vertices as sorted global ids.
    pub fn ghosts(&self) -> &[u32] {
        &self.ghosts
    }

    pub fn ghost_owners(&self) -> &[u32] {
        &self.ghost_owner
    }

    #[inline]
    pub fn is_owned_local(&self, local: u32) -> bool {
        (local as usize) < self.num_owned()
    }

    #[inline]
    pub fn global_id(&self, local: u32) -> u32 {
        let owned = self.num_owned() as u32;
        if local < owned {
            self.range.start + local
        } else {
            self.ghosts[(local - owned) as usize]
        }
    }

    /// Local index of a global vertex if it is owned or a ghost here.
    pub fn local_id(&self, global: u32) -> Option<u32> {
        if self.range.contains(&global) {
            Some(global - self.range.start)
        } else {
            self.ghosts
                .binary_search(&global)
                .ok()
                .map(|i| (self.num_owned() + i) as u32)
        }
    }

    #[inline]
    pub fn vertex_weight(&self, local: u32) -> u64 {
        self.vwgt[local as usize]
    }

    /// Neighbors of an owned vertex as `(local id, edge weight)`.
    #[inline]
    pub fn edges(&self, owned: u32) -> impl Iterator<Item = (u32, u64)> + '_ {
        let r = self.xadj[owned as usize]..self.xadj[owned as usize + 1];
        self.adj[r.clone()].iter().copied().zip(self.ewgt[r].iter().copied())
    }

    pub fn degree(&self, owned: u32) -> usize {
        self.xadj[owned as usize + 1] - self.xadj[owned as usize]
    }

    /// Workers holding `owned` as a ghost. Empty unless it is an interface vertex.
    #[inline]
    pub fn adjacent_workers(&self, owned: u32) -> &[u32] {
        &self.iface_to[self.iface_xadj[owned as usize]..self.iface_xadj[owned as usize + 1]]
    }

    pub fn is_interface(&self, owned: u32) -> bool {
        !self.adjacent_workers(owned).is_empty()
    }
}

/// A graph split into contiguous ranges across `V` workers.
#[derive(Debug, Clone)]
pub struct DistGraph {
    graph: Graph,
    starts: Vec<u32>,
    parts: Vec<LocalPart>,
}

/// Splits `g` over `workers` virtual workers.
pub fn distribute(g: Graph, workers: usize) -> Result<DistGraph> {
    let n = g.n();
    if workers == 0 {
        return Err(Error::Config("worker count must be positive".into()));
    }
    if workers > n {
        return Err(Error::Config(format!("{workers} workers for only {n} vertices")));
    }
    let starts: Vec<u32> = (0..=workers).map(|w| (w * n / workers) as u32).collect();
    let owner = |v: u32| starts.partition_point(|&s| s <= v) - 1;

    let parts = (0..workers)
        .map(|w| {
            let range = starts[w]..starts[w + 1];
            let mut ghosts: Vec<u32> = range
                .clone()
                .flat_map(|u| g.neighbors(u).iter().copied())
                .filter(|v| !range.contains(v))
                .collect();
            ghosts.sort_unstable();
            ghosts.dedup();
            let owned = (range.end - range.start) as usize;
            let local_of = |v: u32| -> u32 {
                if range.contains(&v) {
                    v - range.start
                } else {
                    (owned + ghosts.binary_search(&v).unwrap()) as u32
                }
            };
            let mut xadj = Vec::with_capacity(owned + 1);
            let mut adj = Vec::new();
            let mut ewgt = Vec::new();
            let mut iface_xadj = Vec::with_capacity(owned + 1);
            let mut iface_to = Vec::new();
            xadj.push(0);
            iface_xadj.push(0);
            for u in range.clone() {
                let first = iface_to.len();
                for (v, wt) in g.edges(u) {
                    adj.push(local_of(v));
                    ewgt.push(wt);
                    if !range.contains(&v) {
                        iface_to.push(owner(v) as u32);
                    }
                }
                iface_to[first..].sort_unstable();
                let mut uniq = first;
                for i in first..iface_to.len() {
                    if i == first || iface_to[i] != iface_to[uniq - 1] {
                        iface_to[uniq] = iface_to[i];
                        uniq += 1;
                    }
                }
                iface_to.truncate(uniq);
                xadj.push(adj.len());
                iface_xadj.push(iface_to.len());
            }
            let vwgt = range
                .clone()
                .chain(ghosts.iter().copied())
                .map(|v| g.vertex_weight(v))
                .collect();
            let ghost_owner = ghosts.iter().map(|&v| owner(v) as u32).collect();
            LocalPart { worker: w, range, xadj, adj, ewgt, vwgt, ghosts, ghost_owner, iface_xadj, iface_to }
        })
        .collect();
    Ok(DistGraph { graph: g, starts, parts })
}

impl DistGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    pub fn workers(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[LocalPart] {
        &self.parts
    }

    pub fn part(&self, w: usize) -> &LocalPart {
        &self.parts[w]
    }

    pub fn owner(&self, v: u32) -> usize {
        self.starts.partition_point(|&s| s <= v) - 1
    }

    /// Fresh label views initialized from a global labeling.
    pub fn label_views(&self, global: &[u32]) -> Vec<LabelView> {
        assert_eq!(global.len(), self.graph.n());
        self.parts
            .iter()
            .map(|p| LabelView {
                labels: (0..p.num_local() as u32).map(|l| global[p.global_id(l) as usize]).collect(),
                outbox: vec![Vec::new(); self.workers()],
            })
            .collect()
    }

    /// Concatenates the owned labels of all workers.
    pub fn gather(&self, views: &[LabelView]) -> Vec<u32> {
        self.parts
            .iter()
            .zip(views)
            .flat_map(|(p, v)| v.labels[..p.num_owned()].iter().copied())
            .collect()
    }
}

/// One worker's labels for its owned and ghost vertices plus the send
/// buffers filled during the current phase.
#[derive(Debug, Clone)]
pub struct LabelView {
    labels: Vec<u32>,
    outbox: Vec<Vec<(u32, u32)>>,
}

impl LabelView {
    #[inline]
    pub fn label(&self, local: u32) -> u32 {
        self.labels[local as usize]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Changes the label of an owned vertex and queues the update for every
    /// worker that holds it as a ghost.
    pub fn set_owned(&mut self, part: &LocalPart, owned: u32, label: u32) {
        debug_assert!(part.is_owned_local(owned));
        self.labels[owned as usize] = label;
        let global = part.global_id(owned);
        for &t in part.adjacent_workers(owned) {
            self.outbox[t as usize].push((global, label));
        }
    }

    /// Updates queued for worker `to` in the current phase.
    pub fn pending(&self, to: usize) -> &[(u32, u32)] {
        &self.outbox[to]
    }
}

/// A ghost label change applied by [`phase_exchange`], in local indices of
/// the receiving worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GhostUpdate {
    pub local: u32,
    pub old: u32,
    pub new: u32,
}

/// Delivers every queued update to its receiver and clears the send buffers.
///
/// Called at a phase boundary: updates recorded during phase `i` become
/// visible in phase `i + 1`. Receivers apply senders in ascending worker
/// order and each buffer in FIFO order. Returns the applied updates per
/// receiving worker.
pub fn phase_exchange(dg: &DistGraph, views: &mut [LabelView]) -> Vec<Vec<GhostUpdate>> {
    let workers = dg.workers();
    assert_eq!(views.len(), workers);
    let outboxes: Vec<Vec<Vec<(u32, u32)>>> = views
        .iter_mut()
        .map(|v| v.outbox.iter_mut().map(std::mem::take).collect())
        .collect();
    let mut applied = vec![Vec::new(); workers];
    for (sender, boxes) in outboxes.into_iter().enumerate() {
        for (to, buf) in boxes.into_iter().enumerate() {
            let part = dg.part(to);
            for (global, label) in buf {
                let local = part
                    .local_id(global)
                    .filter(|&l| !part.is_owned_local(l))
                    .unwrap_or_else(|| panic!("worker {sender} sent {global} to non-holder {to}"));
                let slot = &mut views[to].labels[local as usize];
                if *slot != label {
                    applied[to].push(GhostUpdate { local, old: *slot, new: label });
                    *slot = label;
                }
            }
        }
    }
    applied
}

/// How block weights are tracked during label propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Each worker knows only the weight contributed by its owned and ghost
    /// vertices; never communicated.
    Localized,
    /// Global totals plus per-worker deltas, merged by [`BlockWeights::sync`].
    Exact,
}

#[derive(Debug, Clone)]
pub enum BlockWeights {
    Localized(Vec<HashMap<u32, u64>>),
    Exact { totals: Vec<u64>, deltas: Vec<Vec<i64>> },
}

/// Mutable access to one worker's block-weight view.
pub enum WorkerWeights<'a> {
    Localized(&'a mut HashMap<u32, u64>),
    Exact { totals: &'a [u64], delta: &'a mut [i64] },
}

impl WorkerWeights<'_> {
    /// Weight of `block` as seen by this worker.
    #[inline]
    pub fn weight(&self, block: u32) -> u64 {
        match self {
            WorkerWeights::Localized(m) => m.get(&block).copied().unwrap_or(0),
            WorkerWeights::Exact { totals, delta } => {
                (totals[block as usize] as i64 + delta[block as usize]).max(0) as u64
            }
        }
    }

    #[inline]
    pub fn record_move(&mut self, from: u32, to: u32, w: u64) {
        match self {
            WorkerWeights::Localized(m) => {
                let f = m.entry(from).or_insert(0);
                *f = f.saturating_sub(w);
                *m.entry(to).or_insert(0) += w;
            }
            WorkerWeights::Exact { delta, .. } => {
                delta[from as usize] -= w as i64;
                delta[to as usize] += w as i64;
            }
        }
    }

    /// Synchronized total of `block`; `None` in localized mode.
    pub fn synced_total(&self, block: u32) -> Option<u64> {
        match self {
            WorkerWeights::Localized(_) => None,
            WorkerWeights::Exact { totals, .. } => Some(totals[block as usize]),
        }
    }

    /// Net weight this worker moved into `block` since the last sync.
    pub fn own_delta(&self, block: u32) -> i64 {
        match self {
            WorkerWeights::Localized(_) => 0,
            WorkerWeights::Exact { delta, .. } => delta[block as usize],
        }
    }
}

impl BlockWeights {
    /// Exact bookkeeping starting from true global totals.
    pub fn exact(totals: Vec<u64>, workers: usize) -> Self {
        let k = totals.len();
        BlockWeights::Exact { totals, deltas: vec![vec![0; k]; workers] }
    }

    /// Localized bookkeeping seeded with the weights of each worker's owned
    /// and ghost vertices under `views`.
    pub fn localized(dg: &DistGraph, views: &[LabelView]) -> Self {
        BlockWeights::Localized(
            dg.parts()
                .iter()
                .zip(views)
                .map(|(p, v)| {
                    let mut m = HashMap::new();
                    for l in 0..p.num_local() as u32 {
                        *m.entry(v.label(l)).or_insert(0) += p.vertex_weight(l);
                    }
                    m
                })
                .collect(),
        )
    }

    pub fn mode(&self) -> WeightMode {
        match self {
            BlockWeights::Localized(_) => WeightMode::Localized,
            BlockWeights::Exact { .. } => WeightMode::Exact,
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            BlockWeights::Localized(v) => v.len(),
            BlockWeights::Exact { deltas, .. } => deltas.len(),
        }
    }

    pub fn weight(&self, worker: usize, block: u32) -> u64 {
        match self {
            BlockWeights::Localized(v) => v[worker].get(&block).copied().unwrap_or(0),
            BlockWeights::Exact { totals, deltas } => {
                (totals[block as usize] as i64 + deltas[worker][block as usize]).max(0) as u64
            }
        }
    }

    pub fn record_move(&mut self, worker: usize, from: u32, to: u32, w: u64) {
        self.worker_mut(worker).record_move(from, to, w);
    }

    pub fn worker_mut(&mut self, worker: usize) -> WorkerWeights<'_> {
        match self {
            BlockWeights::Localized(v) => WorkerWeights::Localized(&mut v[worker]),
            BlockWeights::Exact { totals, deltas } => {
                WorkerWeights::Exact { totals, delta: &mut deltas[worker] }
            }
        }
    }

    /// Disjoint mutable views for all workers, for use inside one phase.
    pub fn split(&mut self) -> Vec<WorkerWeights<'_>> {
        match self {
            BlockWeights::Localized(v) => v.iter_mut().map(WorkerWeights::Localized).collect(),
            BlockWeights::Exact { totals, deltas } => {
                let totals: &[u64] = totals;
                deltas.iter_mut().map(|d| WorkerWeights::Exact { totals, delta: d }).collect()
            }
        }
    }

    /// Synchronized global totals (exact mode).
    pub fn totals(&self) -> Option<&[u64]> {
        match self {
            BlockWeights::Localized(_) => None,
            BlockWeights::Exact { totals, .. } => Some(totals),
        }
    }

    /// Folds all worker deltas into the global totals, the in-process
    /// equivalent of one allreduce.
    pub fn sync(&mut self) -> Result<()> {
        match self {
            BlockWeights::Localized(_) => {
                Err(Error::Contract("block weights in localized mode are never synchronized".into()))
            }
            BlockWeights::Exact { totals, deltas } => {
                for (b, t) in totals.iter_mut().enumerate() {
                    let sum: i64 = deltas.iter().map(|d| d[b]).sum();
                    let v = *t as i64 + sum;
                    assert!(v >= 0, "block {b} weight became negative");
                    *t = v as u64;
                }
                for d in deltas.iter_mut() {
                    d.iter_mut().for_each(|x| *x = 0);
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> Graph {
        Graph::from_edges(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    }

    #[test]
    fn even_ranges() {
        let dg = distribute(Graph::empty(10), 2).unwrap();
        assert_eq!(dg.part(0).range(), 0..5);
        assert_eq!(dg.part(1).range(), 5..10);
        let dg = distribute(Graph::empty(10), 3).unwrap();
        let ranges: Vec<_> = dg.parts().iter().map(|p| p.range()).collect();
        assert_eq!(ranges, vec![0..3, 3..6, 6..10]);
    }

    #[test]
    fn path_ghosts() {
        let dg = distribute(path4(), 2).unwrap();
        let (p0, p1) = (dg.part(0), dg.part(1));
        assert_eq!(p0.ghosts(), &[2]);
        assert_eq!(p1.ghosts(), &[1]);
        assert_eq!(p0.ghost_owners(), &[1]);
        assert!(p0.is_interface(1) && !p0.is_interface(0));
        assert_eq!(p0.adjacent_workers(1), &[1]);
        assert_eq!(p0.local_id(2), Some(2));
        assert_eq!(p0.local_id(3), None);
        let nb: Vec<_> = p1.edges(0).map(|(l, _)| p1.global_id(l)).collect();
        assert_eq!(nb, vec![1, 3]);
    }

    #[test]
    fn single_worker_has_no_ghosts() {
        let dg = distribute(path4(), 1).unwrap();
        assert!(dg.part(0).ghosts().is_empty());
        let mut views = dg.label_views(&[0, 1, 2, 3]);
        views[0].set_owned(dg.part(0), 2, 9);
        let applied = phase_exchange(&dg, &mut views);
        assert!(applied[0].is_empty());
        assert_eq!(dg.gather(&views), vec![0, 1, 9, 3]);
    }

    #[test]
    fn too_many_workers() {
        assert!(matches!(distribute(path4(), 5), Err(Error::Config(_))));
        assert!(matches!(distribute(path4(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn updates_arrive_one_phase_later() {
        let dg = distribute(path4(), 2).unwrap();
        let mut views = dg.label_views(&[0, 0, 1, 1]);
        let ghost1 = dg.part(1).local_id(1).unwrap();

        // phase 1: worker 0 relabels vertex 1
        views[0].set_owned(dg.part(0), 1, 1);
        assert_eq!(views[1].label(ghost1), 0);
        phase_exchange(&dg, &mut views);
        // phase 2 sees it
        assert_eq!(views[1].label(ghost1), 1);
        assert!(views[0].pending(1).is_empty());
    }

    #[test]
    fn consecutive_changes_keep_order() {
        let dg = distribute(path4(), 2).unwrap();
        let mut views = dg.label_views(&[0, 0, 1, 1]);
        let ghost1 = dg.part(1).local_id(1).unwrap();
        let mut seen = Vec::new();

        views[0].set_owned(dg.part(0), 1, 5); // phase 1
        seen.push(views[1].label(ghost1));
        phase_exchange(&dg, &mut views);
        views[0].set_owned(dg.part(0), 1, 6); // phase 2
        seen.push(views[1].label(ghost1));
        phase_exchange(&dg, &mut views);
        seen.push(views[1].label(ghost1)); // phase 3
        assert_eq!(seen, vec![0, 5, 6]);

        // two changes within one phase are applied in FIFO order
        views[0].set_owned(dg.part(0), 1, 7);
        views[0].set_owned(dg.part(0), 1, 8);
        let applied = phase_exchange(&dg, &mut views);
        assert_eq!(views[1].label(ghost1), 8);
        let news: Vec<_> = applied[1].iter().map(|u| u.new).collect();
        assert_eq!(news, vec![7, 8]);
    }

    #[test]
    fn exact_sync() {
        let mut bw = BlockWeights::exact(vec![10, 10], 2);
        bw.sync().unwrap();
        assert_eq!(bw.totals().unwrap(), &[10, 10]);

        bw.record_move(0, 0, 1, 2);
        bw.record_move(1, 1, 0, 1);
        assert_eq!(bw.weight(0, 0), 8);
        assert_eq!(bw.weight(1, 0), 11);
        bw.sync().unwrap();
        for w in 0..2 {
            assert_eq!(bw.weight(w, 0), 9);
            assert_eq!(bw.weight(w, 1), 11);
        }
    }

    #[test]
    fn single_worker_exact_without_sync() {
        let mut bw = BlockWeights::exact(vec![3, 0], 1);
        bw.record_move(0, 0, 1, 1);
        assert_eq!(bw.weight(0, 0), 2);
        assert_eq!(bw.weight(0, 1), 1);
    }

    #[test]
    fn localized_never_syncs() {
        let dg = distribute(path4(), 2).unwrap();
        let views = dg.label_views(&[0, 1, 2, 3]);
        let mut bw = BlockWeights::localized(&dg, &views);
        assert_eq!(bw.mode(), WeightMode::Localized);
        // worker 0 sees vertices 0, 1 and ghost 2
        assert_eq!(bw.weight(0, 2), 1);
        assert_eq!(bw.weight(0, 3), 0);
        assert!(matches!(bw.sync(), Err(Error::Contract(_))));
    }
}
