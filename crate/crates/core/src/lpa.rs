//! Size-constrained label propagation on a distributed graph.
//!
//! Two flavors share the phase structure of [`crate::distribution`]: every
//! worker sweeps its owned vertices in a seeded random order, reading ghost
//! labels that are at most one phase old, then all workers exchange label
//! updates.
//!
//! * [`cluster_coarsen`] moves a vertex to the neighboring label with the
//!   heaviest connection that can still host it, using localized weights.
//! * [`refine_map`] moves a vertex to the neighboring block with the lowest
//!   communication cost, using exact block weights synchronized once per phase.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::distribution::{
    phase_exchange, BlockWeights, DistGraph, LabelView, LocalPart, WorkerWeights,
};
use crate::graphio::{Graph, Mapping};
use crate::metrics;
use crate::seed;
use crate::topology::Topology;

const CLUSTER_SALT: u64 = 0xC1;
const REFINE_SALT: u64 = 0x5E;

#[derive(Debug, Clone)]
pub struct ClusterParams {
    /// Sweeps over all owned vertices.
    pub iterations: usize,
    /// Largest total vertex weight of one cluster.
    pub cap: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RefineParams {
    /// Number of sweep + exchange phases.
    pub phases: usize,
    /// Block weight limit `L_max`.
    pub max_block_weight: u64,
    pub seed: u64,
}

/// Per-phase record of a refinement run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefineStats {
    /// Exact objective recomputed after each phase.
    pub phase_coco: Vec<u64>,
    pub phase_moves: Vec<usize>,
}

fn shuffled_owned(part: &LocalPart, seed: u64, salt: u64, iteration: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..part.num_owned() as u32).collect();
    let mut rng = seed::rng(&[seed, salt, part.worker() as u64, iteration as u64]);
    order.shuffle(&mut rng);
    order
}

/// Clusters the graph for contraction. Every vertex starts as a singleton;
/// the result is renumbered by first appearance and no cluster weighs more
/// than `cap` unless a single vertex already does.
pub fn cluster_coarsen(dg: &DistGraph, p: &ClusterParams) -> Vec<u32> {
    let n = dg.graph().n();
    let initial: Vec<u32> = (0..n as u32).collect();
    let mut views = dg.label_views(&initial);
    let mut weights = BlockWeights::localized(dg, &views);

    for it in 0..p.iterations {
        let mut handles = weights.split();
        dg.parts()
            .par_iter()
            .zip(views.par_iter_mut())
            .zip(handles.par_iter_mut())
            .for_each(|((part, view), ww)| cluster_sweep(part, view, ww, n, p, it));
        drop(handles);
        let applied = phase_exchange(dg, &mut views);
        for (w, ups) in applied.into_iter().enumerate() {
            let part = dg.part(w);
            let mut ww = weights.worker_mut(w);
            for u in ups {
                ww.record_move(u.old, u.new, part.vertex_weight(u.local));
            }
        }
    }

    let mut labels = dg.gather(&views);
    enforce_cluster_cap(dg.graph(), &mut labels, p.cap);
    renumber(&mut labels);
    labels
}

fn cluster_sweep(
    part: &LocalPart,
    view: &mut LabelView,
    ww: &mut WorkerWeights<'_>,
    n: usize,
    p: &ClusterParams,
    iteration: usize,
) {
    let mut conn = vec![0u64; n];
    let mut touched: Vec<u32> = Vec::new();
    for v in shuffled_owned(part, p.seed, CLUSTER_SALT, iteration) {
        let current = view.label(v);
        for (u, w) in part.edges(v) {
            let l = view.label(u);
            if conn[l as usize] == 0 {
                touched.push(l);
            }
            conn[l as usize] += w;
        }
        let vw = part.vertex_weight(v);
        let mut best = current;
        let mut best_conn = conn[current as usize];
        for &l in &touched {
            if l == current || ww.weight(l) + vw > p.cap {
                continue;
            }
            let c = conn[l as usize];
            if c > best_conn || (c == best_conn && best != current && l < best) {
                best = l;
                best_conn = c;
            }
        }
        for &l in &touched {
            conn[l as usize] = 0;
        }
        touched.clear();
        if best != current {
            ww.record_move(current, best, vw);
            view.set_owned(part, v, best);
        }
    }
}

/// Splits off members of clusters heavier than `cap`, highest vertex id
/// first, into fresh singleton labels. Concurrent admissions on different
/// workers are the only source of such clusters.
fn enforce_cluster_cap(g: &Graph, labels: &mut [u32], cap: u64) {
    let n = labels.len();
    let mut weight = vec![0u64; n];
    for (v, &l) in labels.iter().enumerate() {
        weight[l as usize] += g.vertex_weight(v as u32);
    }
    if weight.iter().all(|&w| w <= cap) {
        return;
    }
    // labels are vertex ids, so a fresh singleton can reuse the id of a
    // vertex that no longer names any cluster
    let mut free: Vec<u32> = (0..n as u32).filter(|&l| weight[l as usize] == 0).collect();
    for v in (0..n).rev() {
        let l = labels[v] as usize;
        let vw = g.vertex_weight(v as u32);
        if weight[l] > cap && weight[l] > vw {
            let fresh = free.pop().expect("a split cluster frees at least one id");
            weight[l] -= vw;
            weight[fresh as usize] = vw;
            labels[v] = fresh;
        }
    }
}

fn renumber(labels: &mut [u32]) {
    let mut map = vec![u32::MAX; labels.len()];
    let mut next = 0u32;
    for l in labels.iter_mut() {
        let slot = &mut map[*l as usize];
        if *slot == u32::MAX {
            *slot = next;
            next += 1;
        }
        *l = *slot;
    }
}

/// Cost of placing owned vertex `v` in block `b` under this worker's view.
pub fn gain(part: &LocalPart, view: &LabelView, v: u32, b: u32, t: &Topology) -> u64 {
    part.edges(v).map(|(u, w)| w * t.pe_distance(b, view.label(u))).sum()
}

/// Cost of placing vertex `v` in block `b` given a complete mapping.
pub fn vertex_cost(g: &Graph, m: &Mapping, t: &Topology, v: u32, b: u32) -> u64 {
    g.edges(v).map(|(u, w)| w * t.pe_distance(b, m.block(u))).sum()
}

/// Refines a mapping so that the communication cost under `t` decreases.
pub fn refine_map(
    dg: &DistGraph,
    m: &Mapping,
    t: &Topology,
    p: &RefineParams,
) -> (Mapping, RefineStats) {
    let g = dg.graph();
    assert_eq!(m.len(), g.n());
    assert_eq!(m.k(), t.num_pes(), "mapping block count must equal the PE count");
    let k = m.k();
    let workers = dg.workers();
    let mut views = dg.label_views(m.blocks());
    let mut weights = BlockWeights::exact(m.block_weights(g), workers);
    let mut stats = RefineStats::default();

    for phase in 0..p.phases {
        let overloaded: Vec<bool> = weights
            .totals()
            .unwrap()
            .iter()
            .map(|&w| w > p.max_block_weight)
            .collect();
        let mut handles = weights.split();
        let moves: usize = dg
            .parts()
            .par_iter()
            .zip(views.par_iter_mut())
            .zip(handles.par_iter_mut())
            .map(|((part, view), ww)| {
                let ctx = RefineCtx { t, k, workers, phase, p, overloaded: &overloaded };
                refine_sweep(part, view, ww, &ctx)
            })
            .sum();
        drop(handles);
        phase_exchange(dg, &mut views);
        weights.sync().expect("exact mode");
        let current = Mapping::new(dg.gather(&views), k).expect("labels stay below k");
        stats.phase_coco.push(metrics::coco(g, &current, t));
        stats.phase_moves.push(moves);
    }
    let out = Mapping::new(dg.gather(&views), k).expect("labels stay below k");
    (out, stats)
}

struct RefineCtx<'a> {
    t: &'a Topology,
    k: u32,
    workers: usize,
    phase: usize,
    p: &'a RefineParams,
    overloaded: &'a [bool],
}

impl RefineCtx<'_> {
    /// Inflow admission. The residual capacity `L_max - total` of a block is
    /// granted to one worker per phase (rotating); the others may only
    /// re-fill what they moved out themselves. The summed inflow of one
    /// phase therefore never exceeds the capacity. With one worker this is
    /// the plain `weight + w <= L_max` test.
    fn admits(&self, worker: usize, ww: &WorkerWeights<'_>, b: u32, w: u64) -> bool {
        let total = ww.synced_total(b).unwrap() as i64;
        let capacity = self.p.max_block_weight as i64 - total;
        let quota = if (b as usize + self.phase) % self.workers == worker {
            capacity
        } else {
            capacity.min(0)
        };
        ww.own_delta(b) + w as i64 <= quota
    }
}

fn refine_sweep(
    part: &LocalPart,
    view: &mut LabelView,
    ww: &mut WorkerWeights<'_>,
    ctx: &RefineCtx<'_>,
) -> usize {
    let t = ctx.t;
    let mut conn = vec![0u64; ctx.k as usize];
    let mut touched: Vec<u32> = Vec::new();
    let mut moves = 0;
    for v in shuffled_owned(part, ctx.p.seed, REFINE_SALT, ctx.phase) {
        let current = view.label(v);
        for (u, w) in part.edges(v) {
            let b = view.label(u);
            if conn[b as usize] == 0 {
                touched.push(b);
            }
            conn[b as usize] += w;
        }
        if touched.iter().all(|&b| b == current) {
            for &b in &touched {
                conn[b as usize] = 0;
            }
            touched.clear();
            continue;
        }
        touched.sort_unstable();
        let cost = |b: u32| -> u64 {
            touched.iter().map(|&c| conn[c as usize] * t.pe_distance(b, c)).sum()
        };
        let vw = part.vertex_weight(v);
        let current_cost = cost(current);
        let mut best: Option<(u64, u32)> = None;
        let mut escape: Option<(u64, u32)> = None;
        let draining = ctx.overloaded[current as usize] && ww.weight(current) > ctx.p.max_block_weight;
        for &b in &touched {
            if b == current || !ctx.admits(part.worker(), ww, b, vw) {
                continue;
            }
            let c = cost(b);
            // ascending iteration makes the first minimum the lowest id
            if c < current_cost && best.is_none_or(|(bc, _)| c < bc) {
                best = Some((c, b));
            }
            if draining && c == current_cost {
                let resulting = ww.weight(b) + vw;
                if escape.is_none_or(|(rw, _)| resulting < rw) {
                    escape = Some((resulting, b));
                }
            }
        }
        for &b in &touched {
            conn[b as usize] = 0;
        }
        touched.clear();
        if let Some(target) = best.map(|(_, b)| b).or(escape.map(|(_, b)| b)) {
            ww.record_move(current, target, vw);
            view.set_owned(part, v, target);
            moves += 1;
        }
    }
    moves
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::distribute;
    use crate::topology::HierarchySpec;

    fn topo(h: &[u32], d: &[u64]) -> Topology {
        Topology::build(HierarchySpec::new(h.to_vec(), d.to_vec()).unwrap()).unwrap()
    }

    fn two_triangles() -> Graph {
        Graph::from_edges(6, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)])
    }

    #[test]
    fn triangles_collapse() {
        for seed in 0..20 {
            for workers in [1, 2] {
                let dg = distribute(two_triangles(), workers).unwrap();
                let c = cluster_coarsen(&dg, &ClusterParams { iterations: 2, cap: 3, seed });
                if workers == 1 {
                    assert_eq!(c, vec![0, 0, 0, 1, 1, 1], "seed {seed}");
                }
                // cap always holds
                let mut w = [0; 6];
                c.iter().for_each(|&l| w[l as usize] += 1);
                assert!(w.iter().all(|&x| x <= 3));
            }
        }
    }

    #[test]
    fn unit_cap_is_identity() {
        let dg = distribute(two_triangles(), 1).unwrap();
        let c = cluster_coarsen(&dg, &ClusterParams { iterations: 5, cap: 1, seed: 3 });
        assert_eq!(c, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_edge_merges() {
        let dg = distribute(Graph::from_edges(2, [(0, 1, 1)]), 1).unwrap();
        let c = cluster_coarsen(&dg, &ClusterParams { iterations: 1, cap: 2, seed: 0 });
        assert_eq!(c, vec![0, 0]);
    }

    #[test]
    fn cap_repair_splits_heavy_clusters() {
        let g = Graph::empty(5);
        let mut labels = vec![2, 2, 2, 2, 4];
        enforce_cluster_cap(&g, &mut labels, 2);
        let mut w = [0; 5];
        labels.iter().for_each(|&l| w[l as usize] += 1);
        assert!(w.iter().all(|&x| x <= 2), "{labels:?}");
        assert_eq!(&labels[..2], &[2, 2]);
    }

    fn star() -> Graph {
        Graph::from_edges(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
    }

    #[test]
    fn star_center_joins_leaves() {
        let t = topo(&[4, 4, 4], &[2, 4, 10]);
        let g = star();
        let pe5 = t.label_to_pe(5).unwrap();
        let pe21 = t.label_to_pe(21).unwrap();
        let m = Mapping::new(vec![pe21, pe5, pe5, pe5], 64).unwrap();
        assert_eq!(metrics::coco(&g, &m, &t), 30);
        assert_eq!(vertex_cost(&g, &m, &t, 0, pe21), 30);
        assert_eq!(vertex_cost(&g, &m, &t, 0, pe5), 0);

        let dg = distribute(g.clone(), 1).unwrap();
        let view = &dg.label_views(m.blocks())[0];
        assert_eq!(gain(dg.part(0), view, 0, pe5, &t), 0);
        assert_eq!(gain(dg.part(0), view, 0, pe21, &t), 30);

        let p = RefineParams { phases: 1, max_block_weight: 100, seed: 0 };
        // visiting order is shuffled: either the center joins the leaves or
        // the leaves follow the center, both remove all cost
        let (out, stats) = refine_map(&dg, &m, &t, &p);
        assert_eq!(metrics::coco(&g, &out, &t), 0);
        assert_eq!(stats.phase_coco, vec![0]);
    }

    #[test]
    fn no_candidates_no_move() {
        let t = topo(&[4, 4, 4], &[2, 4, 10]);
        let g = Graph::from_edges(4, [(0, 1, 1), (2, 3, 1)]);
        let m = Mapping::new(vec![3, 3, 7, 7], 64).unwrap();
        let dg = distribute(g, 2).unwrap();
        let p = RefineParams { phases: 3, max_block_weight: 4, seed: 1 };
        let (out, stats) = refine_map(&dg, &m, &t, &p);
        assert_eq!(out, m);
        assert_eq!(stats.phase_moves, vec![0, 0, 0]);
    }

    #[test]
    fn full_block_blocks_the_move() {
        let t = topo(&[4, 4, 4], &[2, 4, 10]);
        // blocks 0 and 63 are both at their cap of 2; vertices 0 and 2 are
        // joined across the top level but neither may move
        let g = Graph::from_edges(4, [(0, 2, 1)]);
        let far = 63;
        let m = Mapping::new(vec![0, 0, far, far], 64).unwrap();
        let dg = distribute(g, 1).unwrap();
        let p = RefineParams { phases: 2, max_block_weight: 2, seed: 0 };
        let (out, stats) = refine_map(&dg, &m, &t, &p);
        assert_eq!(out, m);
        assert_eq!(stats.phase_moves, vec![0, 0]);
    }

    #[test]
    fn isolated_vertex_costs_nothing() {
        let t = topo(&[2, 2], &[1, 10]);
        let g = Graph::empty(3);
        let m = Mapping::new(vec![0, 1, 2], 4).unwrap();
        for b in 0..4 {
            assert_eq!(vertex_cost(&g, &m, &t, 1, b), 0);
        }
        let e = Graph::from_edges(2, [(0, 1, 1)]);
        let t = topo(&[4, 4, 4], &[2, 4, 10]);
        let m = Mapping::new(vec![0, 1], 64).unwrap();
        assert_eq!(vertex_cost(&e, &m, &t, 0, 0), 2);
    }

    #[test]
    fn overloaded_block_drains_on_ties() {
        // block 0 holds three unit vertices under a cap of two; vertex 1 has
        // equal cost in both blocks and is the only one that can leave
        let t = topo(&[2], &[1]);
        let g = Graph::from_edges(4, [(0, 1, 1), (1, 2, 1)]);
        let m = Mapping::new(vec![0, 0, 1, 0], 2).unwrap();
        for seed in 0..8 {
            let dg = distribute(g.clone(), 1).unwrap();
            let p = RefineParams { phases: 1, max_block_weight: 2, seed };
            let (out, _) = refine_map(&dg, &m, &t, &p);
            assert_eq!(out.blocks(), &[0, 1, 1, 0]);
        }
    }
}
