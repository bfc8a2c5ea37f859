//! The complete mapping algorithm: halo-hub reduction, one multilevel cycle
//! and post-refinement on the original graph.

use std::time::Instant;

use log::{debug, info, warn};
use serde::Serialize;

use crate::distribution::{distribute, DistGraph};
use crate::error::{Error, Result};
use crate::graphio::{contract, Graph, Mapping};
use crate::initpart::run_multistart;
use crate::lpa::{cluster_coarsen, refine_map, ClusterParams, RefineParams};
use crate::metrics;
use crate::seed;
use crate::topology::{HierarchySpec, Topology};

/// Objective optimized by the refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Communication cost under the machine's distances.
    #[default]
    Coco,
    /// Edge cut: every PE pair at distance one. Blocks are still assigned to
    /// PEs by identity.
    Edgecut,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub workers: usize,
    pub seed: u64,
    pub coarsen_iterations: usize,
    pub refine_phases: usize,
    pub post_phases: usize,
    /// Stop coarsening at this many vertices; `None` uses `max(30k, 3000)`.
    pub coarsen_threshold: Option<usize>,
    /// Cluster weight cap during coarsening; `None` derives it from the
    /// balance slack.
    pub cluster_cap: Option<u64>,
    /// Degree above which a vertex is a hub; `None` uses
    /// `max(64 * average degree, 256)`.
    pub hub_threshold: Option<usize>,
    pub objective: Objective,
    pub preprocessing: bool,
    /// Initial partitioning tries; `None` runs one per worker.
    pub initial_tries: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.03,
            workers: 1,
            seed: 0,
            coarsen_iterations: 5,
            refine_phases: 3,
            post_phases: 2,
            coarsen_threshold: None,
            cluster_cap: None,
            hub_threshold: None,
            objective: Objective::Coco,
            preprocessing: true,
            initial_tries: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Validation(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        let counts = [
            ("workers", self.workers),
            ("coarsen iterations", self.coarsen_iterations),
            ("refine phases", self.refine_phases),
            ("post phases", self.post_phases),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.coarsen_threshold == Some(0) || self.cluster_cap == Some(0) || self.hub_threshold == Some(0) || self.initial_tries == Some(0) {
            return Err(Error::Validation("thresholds and tries must be positive".into()));
        }
        Ok(())
    }
}

/// Wall-clock time per stage in milliseconds.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct StageTimes {
    pub total: f64,
    pub preprocess: f64,
    pub coarsen: f64,
    pub initial: f64,
    pub uncoarsen: f64,
    pub postprocess: f64,
}

/// Outcome of [`map_graph`]. Serializes to exactly the report keys; the
/// remaining fields are diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub coco: u64,
    pub edgecut: u64,
    pub imbalance: f64,
    pub k: u32,
    pub n: usize,
    pub m: usize,
    pub levels: usize,
    pub time_ms: StageTimes,
    pub seed: u64,
    pub workers: usize,
    pub feasible: bool,
    /// Objective after every refinement phase, in execution order, measured
    /// on the graph of that phase with the optimized distances.
    #[serde(skip)]
    pub phase_coco: Vec<u64>,
    /// Objective right after the removed hub edges were re-inserted.
    #[serde(skip)]
    pub coco_before_post: u64,
    #[serde(skip)]
    pub removed_edges: usize,
    #[serde(skip)]
    pub level_sizes: Vec<usize>,
}

/// Edges removed by [`reduce_halo_hubs`], each `(u, v, w)` with `u < v`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RemovedEdges {
    edges: Vec<(u32, u32, u64)>,
}

impl RemovedEdges {
    pub fn new(edges: Vec<(u32, u32, u64)>) -> Self {
        Self { edges }
    }

    pub fn edges(&self) -> &[(u32, u32, u64)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Default hub rule: degree above `max(64 * average degree, 256)`.
pub fn default_hub_threshold(g: &Graph) -> usize {
    let avg = if g.n() == 0 { 0.0 } else { 2.0 * g.m() as f64 / g.n() as f64 };
    ((64.0 * avg).ceil() as usize).max(256)
}

/// Temporarily drops every edge between different workers that touches a
/// vertex of degree above `threshold`.
pub fn reduce_halo_hubs(dg: DistGraph, threshold: usize) -> Result<(DistGraph, RemovedEdges)> {
    if threshold == 0 {
        return Err(Error::Validation("hub threshold must be at least 1".into()));
    }
    let g = dg.graph();
    let hubs: Vec<bool> = (0..g.n() as u32).map(|v| g.degree(v) > threshold).collect();
    let removed: Vec<(u32, u32, u64)> = g
        .edge_list()
        .filter(|&(u, v, _)| (hubs[u as usize] || hubs[v as usize]) && dg.owner(u) != dg.owner(v))
        .collect();
    if removed.is_empty() {
        return Ok((dg, RemovedEdges::default()));
    }
    let workers = dg.workers();
    let reduced = g.without_edges(&removed);
    Ok((distribute(reduced, workers)?, RemovedEdges::new(removed)))
}

/// Inverse of [`reduce_halo_hubs`].
pub fn reintroduce_edges(dg: DistGraph, removed: &RemovedEdges) -> Result<DistGraph> {
    if removed.is_empty() {
        return Ok(dg);
    }
    let g = dg.graph();
    let n = g.n() as u32;
    let mut seen: Vec<(u32, u32)> = Vec::with_capacity(removed.len());
    for &(u, v, w) in removed.edges() {
        if u >= n || v >= n || u == v || w == 0 {
            return Err(Error::Integrity(format!("unknown edge ({u},{v})")));
        }
        if g.edge_weight(u, v).is_some() {
            return Err(Error::Integrity(format!("edge ({u},{v}) is already present")));
        }
        seen.push((u.min(v), u.max(v)));
    }
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Integrity(format!("edge {:?} listed twice", w[0])));
    }
    let workers = dg.workers();
    let restored = g.with_edges(removed.edges());
    distribute(restored, workers)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Maps `g` onto the PEs of `t`.
pub fn map_graph(g: &Graph, t: &Topology, cfg: &PipelineConfig) -> Result<(Mapping, RunReport)> {
    cfg.validate()?;
    let k = t.num_pes();
    let n = g.n();
    if n < k as usize {
        return Err(Error::Config(format!("graph has {n} vertices but the machine has {k} PEs")));
    }
    let start = Instant::now();
    let mut times = StageTimes::default();

    // the edge-cut objective is the communication cost on a flat machine
    let flat;
    let objective_topo = match cfg.objective {
        Objective::Coco => t,
        Objective::Edgecut => {
            flat = Topology::build(HierarchySpec::flat(k, 1)?)?;
            &flat
        }
    };

    let workers = cfg.workers.min(n).max(1);
    let total_weight = g.total_vertex_weight();
    let lmax = metrics::max_block_weight(total_weight, k, cfg.epsilon);
    let mut phase_coco = Vec::new();

    // (1) halo hubs
    let t0 = Instant::now();
    let dg = distribute(g.clone(), workers)?;
    let (dg, removed) = if cfg.preprocessing && workers > 1 {
        let threshold = cfg.hub_threshold.unwrap_or_else(|| default_hub_threshold(g));
        reduce_halo_hubs(dg, threshold)?
    } else {
        (dg, RemovedEdges::default())
    };
    if !removed.is_empty() {
        info!("removed {} halo-hub edges", removed.len());
    }
    times.preprocess = ms(t0);

    // (2) coarsening
    let t0 = Instant::now();
    let threshold = cfg.coarsen_threshold.unwrap_or_else(|| (30 * k as usize).max(3000));
    // cluster weights stay below the balance slack plus one, so that a
    // single vertex always fits into a lighter-than-average block
    let slack = lmax.saturating_sub(metrics::balanced_block_weight(total_weight, k));
    let cluster_cap = cfg.cluster_cap.unwrap_or_else(|| g.max_vertex_weight().max(slack + 1));
    let mut levels: Vec<(DistGraph, Vec<u32>)> = Vec::new();
    let mut current = dg;
    while current.graph().n() > threshold {
        let level = levels.len() as u64;
        let params = ClusterParams {
            iterations: cfg.coarsen_iterations,
            cap: cluster_cap,
            seed: seed::derive(&[cfg.seed, 0xC0, level]),
        };
        let clusters = cluster_coarsen(&current, &params);
        let (coarse, projection) = contract(current.graph(), &clusters);
        let before = current.graph().n();
        debug!("level {level}: {before} -> {} vertices", coarse.n());
        if coarse.n() as f64 > 0.95 * before as f64 {
            break;
        }
        let coarse_n = coarse.n();
        let next = distribute(coarse, workers.min(coarse_n))?;
        levels.push((current, projection));
        current = next;
    }
    times.coarsen = ms(t0);
    let mut level_sizes: Vec<usize> = levels.iter().map(|(d, _)| d.graph().n()).collect();
    level_sizes.push(current.graph().n());

    // (3) initial partition of the coarsest graph
    let t0 = Instant::now();
    let tries = cfg.initial_tries.unwrap_or(workers);
    let init = run_multistart(current.graph(), objective_topo, cfg.epsilon, tries, seed::derive(&[cfg.seed, 0x1A]));
    if !init.feasible {
        warn!("initial partition violates the block weight limit {lmax}");
    }
    times.initial = ms(t0);

    // (4) uncoarsening with refinement, coarsest level included
    let t0 = Instant::now();
    let refine = |dg: &DistGraph, m: &Mapping, tag: u64, phases: usize, trace: &mut Vec<u64>| {
        let p = RefineParams { phases, max_block_weight: lmax, seed: seed::derive(&[cfg.seed, 0xF0, tag]) };
        let (m, stats) = refine_map(dg, m, objective_topo, &p);
        trace.extend(stats.phase_coco);
        m
    };
    let mut mapping = refine(&current, &init.mapping, levels.len() as u64, cfg.refine_phases, &mut phase_coco);
    while let Some((finer, projection)) = levels.pop() {
        mapping = mapping.project(&projection);
        mapping = refine(&finer, &mapping, levels.len() as u64, cfg.refine_phases, &mut phase_coco);
        current = finer;
    }
    times.uncoarsen = ms(t0);

    // (5) re-insert hub edges, (6) post-refinement on the original graph
    let t0 = Instant::now();
    let removed_count = removed.len();
    let original = reintroduce_edges(current, &removed)?;
    debug_assert_eq!(original.graph(), g);
    let coco_before_post = metrics::coco(g, &mapping, objective_topo);
    mapping = refine(&original, &mapping, u64::MAX, cfg.post_phases, &mut phase_coco);
    times.postprocess = ms(t0);
    times.total = ms(start);

    let imbalance = metrics::imbalance(g, &mapping, k);
    let feasible = mapping.block_weights(g).iter().all(|&w| w <= lmax);
    let report = RunReport {
        coco: metrics::coco(g, &mapping, t),
        edgecut: metrics::edgecut(g, &mapping),
        imbalance,
        k,
        n,
        m: g.m(),
        levels: level_sizes.len() - 1,
        time_ms: times,
        seed: cfg.seed,
        workers: cfg.workers,
        feasible,
        phase_coco,
        coco_before_post,
        removed_edges: removed_count,
        level_sizes,
    };
    Ok((mapping, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(h: &[u32], d: &[u64]) -> Topology {
        Topology::build(HierarchySpec::new(h.to_vec(), d.to_vec()).unwrap()).unwrap()
    }

    fn star(leaves: u32) -> Graph {
        Graph::from_edges(leaves as usize + 1, (1..=leaves).map(|l| (0, l, 1)))
    }

    #[test]
    fn single_pe() {
        let g = Graph::from_edges(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
        let (m, r) = map_graph(&g, &topo(&[1], &[5]), &PipelineConfig::default()).unwrap();
        assert_eq!(m.blocks(), &[0; 4]);
        assert_eq!(r.coco, 0);
    }

    #[test]
    fn two_triangles() {
        let g = Graph::from_edges(6, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)]);
        for seed in 0..5 {
            let cfg = PipelineConfig { seed, ..Default::default() };
            let (m, r) = map_graph(&g, &topo(&[2], &[1]), &cfg).unwrap();
            assert_eq!(r.coco, 0);
            assert_eq!(r.edgecut, 0);
            assert_ne!(m.block(0), m.block(3));
        }
    }

    #[test]
    fn too_few_vertices() {
        let g = Graph::empty(3);
        assert!(matches!(map_graph(&g, &topo(&[4], &[1]), &PipelineConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn hubs_below_threshold_are_kept() {
        let dg = distribute(star(8), 2).unwrap();
        let (r, removed) = reduce_halo_hubs(dg, 8).unwrap();
        assert!(removed.is_empty());
        assert_eq!(r.graph(), &star(8));
    }

    #[test]
    fn single_worker_has_no_halo() {
        let dg = distribute(star(8), 1).unwrap();
        let (r, removed) = reduce_halo_hubs(dg, 1).unwrap();
        assert!(removed.is_empty());
        assert_eq!(r.graph().m(), 8);
    }

    #[test]
    fn star_split_over_two_workers() {
        // worker 0 owns center and leaves 1..=3, worker 1 owns leaves 4..=8
        let dg = distribute(star(8), 2).unwrap();
        assert_eq!(dg.part(0).range(), 0..4);
        let (r, removed) = reduce_halo_hubs(dg, 4).unwrap();
        let expected: Vec<_> = (4..=8).map(|l| (0, l, 1)).collect();
        assert_eq!(removed.edges(), expected.as_slice());
        assert_eq!(r.graph().neighbors(0), &[1, 2, 3]);
        r.graph().validate().unwrap();
        let back = reintroduce_edges(r, &removed).unwrap();
        assert_eq!(back.graph(), &star(8));
    }

    #[test]
    fn reintroduce_errors() {
        let dg = distribute(star(8), 2).unwrap();
        let (r, removed) = reduce_halo_hubs(dg, 4).unwrap();
        let back = reintroduce_edges(r, &removed).unwrap();
        assert!(matches!(reintroduce_edges(back.clone(), &removed), Err(Error::Integrity(_))));
        let dup = RemovedEdges::new(vec![(0, 5, 1), (5, 0, 1)]);
        let (r, _) = reduce_halo_hubs(back, 4).unwrap();
        assert!(matches!(reintroduce_edges(r.clone(), &dup), Err(Error::Integrity(_))));
        let unknown = RemovedEdges::new(vec![(0, 42, 1)]);
        assert!(matches!(reintroduce_edges(r.clone(), &unknown), Err(Error::Integrity(_))));
        let same = reintroduce_edges(r.clone(), &RemovedEdges::default()).unwrap();
        assert_eq!(same.graph(), r.graph());
    }

    #[test]
    fn config_validation() {
        let bad = PipelineConfig { epsilon: -0.1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
        let bad = PipelineConfig { refine_phases: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig { epsilon: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
