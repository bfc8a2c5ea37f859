//! Initial partitioning of the coarsest graph.
//!
//! The vertex set is split recursively along the hierarchy, top level first:
//! into `H[l-1]` parts, each of those into `H[l-2]` parts and so on. A level
//! with fan-out `h` is itself split by recursive bisection with targets
//! proportional to the number of PEs on each side. Each bisection is
//! multilevel: heavy-edge matching shrinks the graph, one side is grown from
//! a pseudo-peripheral seed on the coarsest graph, and Fiduccia-Mattheyses
//! passes refine the cut on every level on the way back.
//!
//! Block `b` is assigned to PE `b`; the recursion numbers blocks in the mixed
//! radix of the hierarchy, so sibling parts land on sibling PEs and heavy
//! cuts made late in the recursion cross only cheap, low-level links.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graphio::{contract, Graph, Mapping};
use crate::metrics;
use crate::seed;
use crate::topology::Topology;

/// Growth attempts on the coarsest bisection graph; the lowest cut wins.
const GROWTH_TRIES: usize = 4;
/// Bisection graphs at most this large are not coarsened further.
const COARSEST_BISECT: usize = 100;
/// Coarsening stops once a matching shrinks the graph by less than this.
const COARSEN_RATIO: f64 = 0.9;
const FM_PASSES: usize = 8;
/// Consecutive non-improving moves before an FM pass gives up.
const FM_PATIENCE: usize = 100;

#[derive(Debug, Clone)]
pub struct InitialPartition {
    pub mapping: Mapping,
    /// Whether every block respects `L_max`.
    pub feasible: bool,
    pub seed: u64,
}

/// Partitions `g` into one block per PE of `t`.
pub fn initial_partition(g: &Graph, t: &Topology, epsilon: f64, seed: u64) -> InitialPartition {
    let k = t.num_pes();
    let n = g.n();
    let lmax = metrics::max_block_weight(g.total_vertex_weight(), k, epsilon);
    if k == 1 || n == 0 {
        let mapping = Mapping::uniform(n, k);
        let feasible = mapping.block_weights(g).iter().all(|&w| w <= lmax);
        return InitialPartition { mapping, feasible, seed };
    }

    let mut rng = seed::rng(&[seed, 0x1B]);
    let levels = t.spec().children();
    let depth: u32 = levels.iter().map(|&h| ceil_log2(h)).sum::<u32>().max(1);
    let level_eps = epsilon / depth as f64;

    let mut blocks = vec![0u32; n];
    // strides[i] = product of children counts below level i
    let mut strides = vec![1u32; levels.len()];
    for i in 1..levels.len() {
        strides[i] = strides[i - 1] * levels[i - 1];
    }

    // work items: (vertices, hierarchy level still to split, base block)
    let mut stack: Vec<(Vec<u32>, usize, u32)> = vec![((0..n as u32).collect(), levels.len(), 0)];
    while let Some((verts, level, base)) = stack.pop() {
        if level == 0 || verts.is_empty() {
            for &v in &verts {
                blocks[v as usize] = base;
            }
            continue;
        }
        let i = level - 1;
        let parts = multisect(g, &verts, levels[i], level_eps, &mut rng);
        for (j, part) in parts.into_iter().enumerate() {
            stack.push((part, i, base + j as u32 * strides[i]));
        }
    }

    let mut mapping = Mapping::new(blocks, k).expect("recursion yields blocks below k");
    let feasible = rebalance(g, &mut mapping, lmax);
    InitialPartition { mapping, feasible, seed }
}

/// Runs `tries` independent partitions with derived seeds and keeps the best:
/// feasible before infeasible, then lowest cost under `t`, lowest edge cut,
/// lowest try index.
pub fn run_multistart(
    g: &Graph,
    t: &Topology,
    epsilon: f64,
    tries: usize,
    seed: u64,
) -> InitialPartition {
    assert!(tries >= 1);
    let seeds: Vec<u64> =
        (0..tries).map(|i| if i == 0 { seed } else { seed::derive(&[seed, i as u64]) }).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let p = initial_partition(g, t, epsilon, s);
            let key = (!p.feasible, metrics::coco(g, &p.mapping, t), metrics::edgecut(g, &p.mapping), i);
            (key, p)
        })
        .min_by_key(|(key, _)| *key)
        .map(|(_, p)| p)
        .unwrap()
}

fn ceil_log2(h: u32) -> u32 {
    if h <= 1 {
        0
    } else {
        u32::BITS - (h - 1).leading_zeros()
    }
}

/// Splits `verts` into `h` parts of roughly equal weight.
fn multisect(g: &Graph, verts: &[u32], h: u32, eps: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    if h == 1 {
        return vec![verts.to_vec()];
    }
    let left = h.div_ceil(2);
    let right = h - left;
    let sub = g.induced_subgraph(verts);
    let side = bisect(&sub, left as u64, right as u64, eps, rng);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, &v) in verts.iter().enumerate() {
        if side[i] {
            b.push(v);
        } else {
            a.push(v);
        }
    }
    let mut out = multisect(g, &a, left, eps, rng);
    out.extend(multisect(g, &b, right, eps, rng));
    out
}

/// Two-way split; `false` marks the side that should receive
/// `left / (left + right)` of the weight.
fn bisect(g: &Graph, left: u64, right: u64, eps: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let total = g.total_vertex_weight();
    let target = (total * left + (left + right) / 2) / (left + right);
    let tol = ((target as f64) * eps).floor() as u64;
    if g.n() == 0 {
        return Vec::new();
    }
    multilevel_bisect(g, &Bounds { target, tol, total }, rng)
}

/// Heavy-edge matching down to `COARSEST_BISECT` vertices, growth on the
/// coarsest graph, FM refinement on the way back up.
fn multilevel_bisect(g: &Graph, b: &Bounds, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = g.n();
    if n > COARSEST_BISECT {
        // pairs stay light enough that the coarsest graph can still be
        // balanced to within a few vertices
        let cap = g.max_vertex_weight().max(b.total / COARSEST_BISECT as u64);
        let matching = heavy_edge_matching(g, cap, rng);
        let (coarse, projection) = contract(g, &matching);
        if (coarse.n() as f64) < COARSEN_RATIO * n as f64 {
            let coarse_side = multilevel_bisect(&coarse, b, rng);
            let mut side: Vec<bool> = projection.iter().map(|&c| coarse_side[c as usize]).collect();
            fm_refine(g, &mut side, b, rng);
            return side;
        }
    }
    let mut best: Option<(u64, u64, Vec<bool>)> = None;
    let slack = b.slack(g);
    for _ in 0..GROWTH_TRIES {
        let start = rng.gen_range(0..n as u32);
        let seed_vertex = pseudo_peripheral(g, start);
        let mut side = grow(g, seed_vertex, b, rng);
        fm_refine(g, &mut side, b, rng);
        let cut = cut_weight(g, &side);
        let excess = b.deviation(side_weight(g, &side)).saturating_sub(slack);
        if best.as_ref().is_none_or(|(be, bc, _)| (excess, cut) < (*be, *bc)) {
            best = Some((excess, cut, side));
        }
    }
    best.unwrap().2
}

/// Cluster labels pairing each vertex with its heaviest unmatched neighbor,
/// visiting vertices in random order. Pairs never exceed weight `cap`.
fn heavy_edge_matching(g: &Graph, cap: u64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    use rand::seq::SliceRandom;
    let n = g.n();
    let mut label: Vec<u32> = (0..n as u32).collect();
    let mut matched = vec![false; n];
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    for &v in &order {
        if matched[v as usize] {
            continue;
        }
        let wv = g.vertex_weight(v);
        let mate = g
            .edges(v)
            .filter(|&(u, _)| !matched[u as usize] && u != v && wv + g.vertex_weight(u) <= cap)
            .max_by_key(|&(u, w)| (w, Reverse(g.vertex_weight(u)), Reverse(u)))
            .map(|(u, _)| u);
        if let Some(u) = mate {
            matched[u as usize] = true;
            matched[v as usize] = true;
            label[u as usize] = v;
        }
    }
    label
}

struct Bounds {
    target: u64,
    tol: u64,
    total: u64,
}

impl Bounds {
    fn deviation(&self, left_weight: u64) -> u64 {
        left_weight.abs_diff(self.target)
    }

    /// Tolerance on a coarse level: heavy vertices make exact balance
    /// impossible, so allow one vertex of slack.
    fn slack(&self, g: &Graph) -> u64 {
        self.tol.max(g.max_vertex_weight())
    }
}

fn side_weight(g: &Graph, side: &[bool]) -> u64 {
    side.iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(v, _)| g.vertex_weight(v as u32))
        .sum()
}

fn cut_weight(g: &Graph, side: &[bool]) -> u64 {
    g.edge_list().filter(|&(u, v, _)| side[u as usize] != side[v as usize]).map(|(_, _, w)| w).sum()
}

/// Last vertex reached by repeated breadth-first searches from `start`.
fn pseudo_peripheral(g: &Graph, start: u32) -> u32 {
    let mut dist = vec![u32::MAX; g.n()];
    let mut queue = VecDeque::new();
    let mut current = start;
    let mut ecc = 0;
    for _ in 0..3 {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[current as usize] = 0;
        queue.push_back(current);
        let mut last = current;
        while let Some(u) = queue.pop_front() {
            last = u;
            for &v in g.neighbors(u) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = dist[u as usize] + 1;
                    queue.push_back(v);
                }
            }
        }
        if dist[last as usize] <= ecc {
            break;
        }
        ecc = dist[last as usize];
        current = last;
    }
    current
}

/// Greedy graph growing: everything starts on the right side (`true`);
/// vertices with the highest connection gain move left until the target
/// weight is reached.
fn grow(g: &Graph, seed_vertex: u32, b: &Bounds, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = g.n();
    let mut side = vec![true; n];
    // gain = weight to left side - weight to right side
    let mut gain: Vec<i64> = (0..n as u32).map(|v| -(g.edges(v).map(|(_, w)| w as i64).sum::<i64>())).collect();
    let mut queued = vec![false; n];
    let mut heap: BinaryHeap<(i64, Reverse<u32>)> = BinaryHeap::new();
    let mut left_weight = 0u64;
    let hi = b.target + b.slack(g);
    let mut next_seed = Some(seed_vertex);

    while left_weight < b.target {
        let v = match heap.pop() {
            Some((gv, Reverse(v))) => {
                if !side[v as usize] || gv != gain[v as usize] {
                    continue;
                }
                v
            }
            None => {
                // disconnected remainder: restart from a random right vertex
                let s = next_seed.take().or_else(|| {
                    let rest: Vec<u32> = (0..n as u32).filter(|&v| side[v as usize] && !queued[v as usize]).collect();
                    (!rest.is_empty()).then(|| rest[rng.gen_range(0..rest.len())])
                });
                match s {
                    Some(s) => {
                        queued[s as usize] = true;
                        heap.push((gain[s as usize], Reverse(s)));
                        continue;
                    }
                    None => break,
                }
            }
        };
        let w = g.vertex_weight(v);
        if left_weight + w > hi {
            continue;
        }
        side[v as usize] = false;
        left_weight += w;
        for (u, ew) in g.edges(v) {
            if side[u as usize] {
                gain[u as usize] += 2 * ew as i64;
                queued[u as usize] = true;
                heap.push((gain[u as usize], Reverse(u)));
            }
        }
    }
    side
}

/// Fiduccia-Mattheyses passes: repeatedly move the best-gain unlocked
/// vertex whose move keeps (or brings) the split within tolerance, even at
/// negative gain, then roll back to the best prefix of moves.
fn fm_refine(g: &Graph, side: &mut [bool], b: &Bounds, rng: &mut ChaCha8Rng) {
    let n = g.n();
    let slack = b.slack(g);
    let excess = |lw: u64| b.deviation(lw).saturating_sub(slack);
    let mut gain = vec![0i64; n];
    let mut locked = vec![false; n];
    let mut moves: Vec<u32> = Vec::new();
    for _ in 0..FM_PASSES {
        let mut left_weight = side_weight(g, side);
        let mut cut = 0i64;
        // one heap per side, keyed by (gain, random tie-break)
        let mut heaps: [BinaryHeap<(i64, u32, u32)>; 2] = [BinaryHeap::new(), BinaryHeap::new()];
        for v in 0..n as u32 {
            let s = side[v as usize];
            let mut g_v = 0i64;
            for (u, w) in g.edges(v) {
                if side[u as usize] == s {
                    g_v -= w as i64;
                } else {
                    g_v += w as i64;
                    cut += w as i64;
                }
            }
            gain[v as usize] = g_v;
            locked[v as usize] = false;
            if g.edges(v).any(|(u, _)| side[u as usize] != s) {
                heaps[s as usize].push((g_v, rng.gen(), v));
            }
        }
        cut /= 2;
        let start_key = (excess(left_weight), cut);
        let mut best = start_key;
        let mut best_len = 0;
        moves.clear();
        let mut since_best = 0;
        while since_best < FM_PATIENCE {
            // best valid candidate on each side
            let mut pick: Option<(i64, u32)> = None;
            for s in [false, true] {
                let heap = &mut heaps[s as usize];
                while let Some(&(gv, _, v)) = heap.peek() {
                    if locked[v as usize] || side[v as usize] != s || gain[v as usize] != gv {
                        heap.pop();
                        continue;
                    }
                    let w = g.vertex_weight(v);
                    let new_left = if s { left_weight + w } else { left_weight - w };
                    let ok = excess(new_left) == 0 || excess(new_left) < excess(left_weight);
                    if ok && pick.is_none_or(|(pg, _)| gv > pg) {
                        pick = Some((gv, v));
                    }
                    break;
                }
            }
            let Some((gv, v)) = pick else { break };
            heaps[side[v as usize] as usize].pop();
            let s = side[v as usize];
            let w = g.vertex_weight(v);
            left_weight = if s { left_weight + w } else { left_weight - w };
            side[v as usize] = !s;
            locked[v as usize] = true;
            cut -= gv;
            moves.push(v);
            for (u, ew) in g.edges(v) {
                if locked[u as usize] {
                    continue;
                }
                // u on v's old side gains from following, u on the new side loses
                let delta = if side[u as usize] == s { 2 * ew as i64 } else { -2 * ew as i64 };
                gain[u as usize] += delta;
                heaps[side[u as usize] as usize].push((gain[u as usize], rng.gen(), u));
            }
            let key = (excess(left_weight), cut);
            if key < best {
                best = key;
                best_len = moves.len();
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        for &v in &moves[best_len..] {
            side[v as usize] = !side[v as usize];
        }
        if best >= start_key {
            break;
        }
    }
}

/// Moves vertices out of blocks heavier than `lmax`: first to an adjacent
/// block with room and the best cut gain, otherwise the lightest vertex to
/// the lightest block. Returns whether every block fits afterwards.
fn rebalance(g: &Graph, m: &mut Mapping, lmax: u64) -> bool {
    let k = m.k() as usize;
    let mut weights = m.block_weights(g);
    let mut blocks = m.blocks().to_vec();
    let mut stuck = vec![false; k];
    let mut conn = vec![0i64; k];
    loop {
        let Some(a) = (0..k).filter(|&b| weights[b] > lmax && !stuck[b]).max_by_key(|&b| (weights[b], Reverse(b)))
        else {
            break;
        };
        // (gain, -weight, vertex, target)
        let mut best: Option<(i64, Reverse<u64>, Reverse<u32>, usize)> = None;
        for v in (0..g.n() as u32).filter(|&v| blocks[v as usize] as usize == a) {
            let w = g.vertex_weight(v);
            let mut touched = Vec::new();
            for (u, ew) in g.edges(v) {
                let bu = blocks[u as usize] as usize;
                if conn[bu] == 0 {
                    touched.push(bu);
                }
                conn[bu] += ew as i64;
            }
            for &b in &touched {
                if b != a && weights[b] + w <= lmax {
                    let cand = (conn[b] - conn[a], Reverse(w), Reverse(v), b);
                    if best.is_none_or(|bb| cand > bb) {
                        best = Some(cand);
                    }
                }
            }
            for &b in &touched {
                conn[b] = 0;
            }
        }
        let chosen = best.map(|(_, _, Reverse(v), b)| (v, b)).or_else(|| {
            let lightest = (0..k).min_by_key(|&b| (weights[b], b))?;
            (0..g.n() as u32)
                .filter(|&v| blocks[v as usize] as usize == a)
                .filter(|&v| weights[lightest] + g.vertex_weight(v) <= lmax)
                .min_by_key(|&v| (g.vertex_weight(v), v))
                .map(|v| (v, lightest))
        });
        match chosen {
            Some((v, b)) => {
                let w = g.vertex_weight(v);
                weights[a] -= w;
                weights[b] += w;
                blocks[v as usize] = b as u32;
            }
            None => stuck[a] = true,
        }
    }
    *m = Mapping::new(blocks, m.k()).unwrap();
    weights.iter().all(|&w| w <= lmax)
}
