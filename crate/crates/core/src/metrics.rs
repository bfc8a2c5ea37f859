//! Quality measures of a mapping.

use crate::graphio::{Graph, Mapping};
use crate::topology::Topology;

/// Communication cost: every undirected edge contributes its weight times
/// the distance between the PEs of its endpoints.
pub fn coco(g: &Graph, m: &Mapping, t: &Topology) -> u64 {
    debug_assert!(m.k() <= t.num_pes());
    g.edge_list()
        .map(|(u, v, w)| w * t.pe_distance(m.block(u), m.block(v)))
        .sum()
}

/// Total weight of edges whose endpoints lie in different blocks.
pub fn edgecut(g: &Graph, m: &Mapping) -> u64 {
    g.edge_list()
        .filter(|&(u, v, _)| m.block(u) != m.block(v))
        .map(|(_, _, w)| w)
        .sum()
}

/// `ceil(W / k)`, the perfectly balanced block weight.
pub fn balanced_block_weight(total: u64, k: u32) -> u64 {
    total.div_ceil(k as u64)
}

/// Largest admissible block weight `(1 + eps) * ceil(W / k)`, rounded down.
pub fn max_block_weight(total: u64, k: u32, epsilon: f64) -> u64 {
    let avg = balanced_block_weight(total, k) as f64;
    // tolerate representation error such as 1.15 * 100 = 114.999...
    ((1.0 + epsilon) * avg + 1e-9).floor() as u64
}

/// `max_b weight(b) / ceil(W / k) - 1`; zero for an empty graph.
pub fn imbalance(g: &Graph, m: &Mapping, k: u32) -> f64 {
    let avg = balanced_block_weight(g.total_vertex_weight(), k);
    if avg == 0 {
        return 0.0;
    }
    let max = m.block_weights(g).into_iter().max().unwrap_or(0);
    max as f64 / avg as f64 - 1.0
}
