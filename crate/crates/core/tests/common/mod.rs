//! Reference implementations shared by the integration tests. Nothing here
//! touches bit-labels: distances come from walking an explicit tree.
#![allow(dead_code)]

use hiermap::graphio::{Graph, Mapping};
use hiermap::topology::{HierarchySpec, Topology};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Machine tree stored as parent pointers. Level 0 nodes are the PEs; the
/// parent of node `j` on level `i` is node `j / H[i]` on level `i + 1`.
pub struct ExplicitTree {
    parent: Vec<Vec<u32>>,
    distances: Vec<u64>,
}

impl ExplicitTree {
    pub fn new(children: &[u32], distances: &[u64]) -> Self {
        let mut parent = Vec::new();
        let mut width: u64 = children.iter().map(|&h| h as u64).product();
        for &h in children {
            parent.push((0..width as u32).map(|j| j / h).collect());
            width /= h as u64;
        }
        Self { parent, distances: distances.to_vec() }
    }

    /// Level whose node is the lowest common ancestor, minus one; `None` for
    /// the same PE.
    pub fn lca_level(&self, p: u32, q: u32) -> Option<usize> {
        let (mut a, mut b) = (p, q);
        if a == b {
            return None;
        }
        for (i, parents) in self.parent.iter().enumerate() {
            a = parents[a as usize];
            b = parents[b as usize];
            if a == b {
                return Some(i);
            }
        }
        unreachable!("the root is shared")
    }

    pub fn distance(&self, p: u32, q: u32) -> u64 {
        self.lca_level(p, q).map_or(0, |i| self.distances[i])
    }

    pub fn matrix(&self, k: u32) -> Vec<Vec<u64>> {
        (0..k).map(|p| (0..k).map(|q| self.distance(p, q)).collect()).collect()
    }
}

/// Sums every edge from both sides and halves the result.
pub fn naive_coco(g: &Graph, m: &Mapping, dist: &[Vec<u64>]) -> u64 {
    let mut twice = 0;
    for u in 0..g.n() as u32 {
        for (v, w) in g.edges(u) {
            twice += w * dist[m.block(u) as usize][m.block(v) as usize];
        }
    }
    twice / 2
}

pub fn naive_edgecut(g: &Graph, m: &Mapping) -> u64 {
    let mut cut = 0;
    for u in 0..g.n() as u32 {
        for (v, w) in g.edges(u) {
            if u < v && m.block(u) != m.block(v) {
                cut += w;
            }
        }
    }
    cut
}

pub fn topology(children: &[u32], distances: &[u64]) -> Topology {
    Topology::build(HierarchySpec::new(children.to_vec(), distances.to_vec()).unwrap()).unwrap()
}

/// Random hierarchy with at most `max_levels` levels, children in
/// `1..=max_children` and at most `max_pes` PEs.
pub fn random_hierarchy(r: &mut impl Rng, max_levels: usize, max_children: u32, max_pes: u64) -> (Vec<u32>, Vec<u64>) {
    loop {
        let l = r.gen_range(1..=max_levels);
        let h: Vec<u32> = (0..l).map(|_| r.gen_range(1..=max_children)).collect();
        if h.iter().map(|&x| x as u64).product::<u64>() <= max_pes {
            let d = (0..l).map(|_| r.gen_range(0..1000)).collect();
            return (h, d);
        }
    }
}

/// Erdős–Rényi style graph with random edge and vertex weights.
pub fn random_graph(r: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if r.gen_bool(p) {
                edges.push((u, v, r.gen_range(1..10)));
            }
        }
    }
    let vwgt = (0..n).map(|_| r.gen_range(1..5)).collect();
    Graph::from_edges_weighted(n, edges, vwgt)
}

pub fn random_mapping(r: &mut impl Rng, n: usize, k: u32) -> Mapping {
    Mapping::new((0..n).map(|_| r.gen_range(0..k)).collect(), k).unwrap()
}

/// Shuffled round-robin assignment: block sizes differ by at most one.
pub fn random_balanced(n: usize, k: u32, seed: u64) -> Mapping {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let mut blocks = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        blocks[v] = (i % k as usize) as u32;
    }
    Mapping::new(blocks, k).unwrap()
}

/// `count` cliques of size `q` joined in a path by single edges between
/// consecutive cliques.
pub fn clique_path(count: u32, q: u32) -> Graph {
    let mut edges = Vec::new();
    for c in 0..count {
        let base = c * q;
        for i in 0..q {
            for j in i + 1..q {
                edges.push((base + i, base + j, 1));
            }
        }
        if c + 1 < count {
            edges.push((base + q - 1, base + q, 1));
        }
    }
    Graph::from_edges((count * q) as usize, edges)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<u32>> {
    fn go(prefix: &mut Vec<u32>, rest: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n as u32).collect(), &mut out);
    out
}
