//! Synthetic complex networks: Barabási–Albert and R-MAT, plus largest
//! connected component extraction.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphio::Graph;
use crate::seed;

/// Preferential attachment. Starts from a clique on `d` vertices; each
/// further vertex links to `d` distinct earlier vertices chosen with
/// probability proportional to their degree.
pub fn gen_ba(n: usize, d: usize, seed: u64) -> Result<Graph> {
    if d == 0 || n <= d {
        return Err(Error::Validation(format!("barabasi-albert needs n > d >= 1, got n={n} d={d}")));
    }
    if n > u32::MAX as usize {
        return Err(Error::Validation(format!("n={n} exceeds 32-bit vertex ids")));
    }
    let mut rng = seed::rng(&[seed, 0xBA]);
    let mut edges: Vec<(u32, u32, u64)> = Vec::with_capacity(d * n);
    // every endpoint occurrence, so uniform picks are degree-proportional
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * d * n);
    for i in 0..d as u32 {
        for j in i + 1..d as u32 {
            edges.push((i, j, 1));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    let mut targets: Vec<u32> = Vec::with_capacity(d);
    for v in d as u32..n as u32 {
        targets.clear();
        while targets.len() < d {
            let t = if endpoints.is_empty() {
                rng.gen_range(0..v)
            } else {
                endpoints[rng.gen_range(0..endpoints.len())]
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, v, 1));
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    Ok(Graph::from_edges(n, edges))
}

/// Quadrant probabilities of the recursive matrix model.
#[derive(Debug, Clone, Copy)]
pub struct RmatParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for RmatParams {
    fn default() -> Self {
        Self { a: 0.57, b: 0.19, c: 0.19, d: 0.05 }
    }
}

/// R-MAT graph on `2^scale` vertices from `edge_factor * 2^scale` samples.
/// Self-loops are dropped, duplicates merged, edges symmetrized; all weights
/// are one.
pub fn gen_rmat(scale: u32, edge_factor: usize, p: RmatParams, seed: u64) -> Result<Graph> {
    let sum = p.a + p.b + p.c + p.d;
    if (sum - 1.0).abs() > 1e-9 || [p.a, p.b, p.c, p.d].iter().any(|&x| x < 0.0) {
        return Err(Error::Validation(format!("r-mat probabilities must be >= 0 and sum to 1, got {sum}")));
    }
    if scale > 24 {
        return Err(Error::Validation(format!("scale {scale} exceeds the supported 24")));
    }
    let n = 1usize << scale;
    let samples = edge_factor * n;
    let mut rng = seed::rng(&[seed, 0x4A]);
    let (ab, abc) = (p.a + p.b, p.a + p.b + p.c);
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (mut u, mut v) = (0u32, 0u32);
        for bit in (0..scale).rev() {
            let r: f64 = rng.gen();
            let (du, dv) = if r < p.a {
                (0, 0)
            } else if r < ab {
                (0, 1)
            } else if r < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            u |= du << bit;
            v |= dv << bit;
        }
        if u != v {
            pairs.push((u.min(v), u.max(v)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(Graph::from_edges(n, pairs.into_iter().map(|(u, v)| (u, v, 1))))
}

/// Induced subgraph on the largest connected component, vertices renumbered
/// in ascending original order. Ties go to the component containing the
/// smallest vertex id. The second value maps old ids to new ones.
pub fn largest_cc(g: &Graph) -> (Graph, Vec<Option<u32>>) {
    let n = g.n();
    let mut comp = vec![u32::MAX; n];
    let mut best: Option<(usize, u32)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for s in 0..n as u32 {
        if comp[s as usize] != u32::MAX {
            continue;
        }
        comp[s as usize] = next;
        queue.push_back(s);
        let mut size = 0;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in g.neighbors(u) {
                if comp[v as usize] == u32::MAX {
                    comp[v as usize] = next;
                    queue.push_back(v);
                }
            }
        }
        if best.is_none_or(|(bs, _)| size > bs) {
            best = Some((size, next));
        }
        next += 1;
    }
    let Some((_, keep)) = best else {
        return (Graph::empty(0), Vec::new());
    };
    let vertices: Vec<u32> = (0..n as u32).filter(|&v| comp[v as usize] == keep).collect();
    let mut map = vec![None; n];
    for (i, &v) in vertices.iter().enumerate() {
        map[v as usize] = Some(i as u32);
    }
    (g.induced_subgraph(&vertices), map)
}

/// Breadth-first reachability check.
pub fn is_connected(g: &Graph) -> bool {
    if g.n() == 0 {
        return true;
    }
    let mut seen = vec![false; g.n()];
    let mut stack = vec![0u32];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in g.neighbors(u) {
            if !seen[v as usize] {
                seen[v as usize] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == g.n()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ba_small_is_clique() {
        for d in 1..6 {
            let g = gen_ba(d + 1, d, 3).unwrap();
            assert_eq!(g.m(), d * (d + 1) / 2);
            g.validate().unwrap();
        }
    }

    #[test]
    fn ba_edge_count_and_determinism() {
        let g = gen_ba(100, 2, 11).unwrap();
        assert_eq!(g.m(), 197);
        assert_eq!(g, gen_ba(100, 2, 11).unwrap());
        assert_ne!(g, gen_ba(100, 2, 12).unwrap());
        assert!(is_connected(&g));
        g.validate().unwrap();
    }

    #[test]
    fn ba_heavy_tail() {
        for seed in 0..10 {
            let g = gen_ba(10_000, 4, seed).unwrap();
            let max = (0..g.n() as u32).map(|v| g.degree(v)).max().unwrap();
            assert!(max > 16, "seed {seed}: max degree {max}");
        }
    }

    #[test]
    fn ba_rejects_bad_input() {
        assert!(gen_ba(3, 3, 0).is_err());
        assert!(gen_ba(3, 0, 0).is_err());
    }

    #[test]
    fn rmat_bounds() {
        let g = gen_rmat(4, 8, RmatParams::default(), 1).unwrap();
        assert_eq!(g.n(), 16);
        assert!(g.m() <= 128);
        g.validate().unwrap();
        assert_eq!(g, gen_rmat(4, 8, RmatParams::default(), 1).unwrap());
        let bad = RmatParams { a: 0.5, b: 0.2, c: 0.2, d: 0.2 };
        assert!(gen_rmat(4, 8, bad, 1).is_err());
    }

    #[test]
    fn rmat_uniform_is_poisson_like() {
        // with equal quadrants every pair is equally likely, so degrees are
        // close to binomial: variance / mean near one
        let p = RmatParams { a: 0.25, b: 0.25, c: 0.25, d: 0.25 };
        for seed in 0..3 {
            let g = gen_rmat(12, 4, p, seed).unwrap();
            let degs: Vec<f64> = (0..g.n() as u32).map(|v| g.degree(v) as f64).collect();
            let mean = degs.iter().sum::<f64>() / degs.len() as f64;
            let var = degs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / degs.len() as f64;
            assert!((var / mean - 1.0).abs() < 0.15, "seed {seed}: mean {mean} var {var}");
        }
    }

    #[test]
    fn lcc_examples() {
        let g = Graph::from_edges(7, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)]);
        let (c, map) = largest_cc(&g);
        assert_eq!(c.n(), 3);
        assert_eq!(c.m(), 3);
        assert_eq!(map[0], Some(0));
        assert_eq!(map[3], None);
        assert_eq!(map[6], None);

        let path = Graph::from_edges(3, [(0, 1, 1), (1, 2, 1)]);
        assert_eq!(largest_cc(&path).0, path);
        let (e, map) = largest_cc(&Graph::empty(0));
        assert_eq!(e.n(), 0);
        assert!(map.is_empty());
    }

    #[test]
    fn lcc_of_rmat_is_connected() {
        let g = gen_rmat(10, 4, RmatParams::default(), 5).unwrap();
        let (c, _) = largest_cc(&g);
        assert!(is_connected(&c));
        c.validate().unwrap();
        assert!(c.n() < g.n());
    }
}
