//! Undirected weighted graphs in compressed adjacency form, METIS input,
//! mapping files and cluster contraction.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// Undirected graph with positive integer vertex and edge weights.
///
/// Every edge is stored in both adjacency lists; lists are sorted ascending
/// and free of self-loops and duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    xadj: Vec<usize>,
    adjncy: Vec<u32>,
    adjwgt: Vec<u64>,
    vwgt: Vec<u64>,
}

impl Graph {
    /// Graph with `n` unit-weight vertices and no edges.
    pub fn empty(n: usize) -> Self {
        Self { xadj: vec![0; n + 1], adjncy: Vec::new(), adjwgt: Vec::new(), vwgt: vec![1; n] }
    }

    /// Builds the canonical graph from undirected edges. Self-loops are
    /// dropped; parallel edges are merged by summing their weights.
    pub fn from_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, u64)>,
    {
        Self::from_edges_weighted(n, edges, vec![1; n])
    }

    pub fn from_edges_weighted<I>(n: usize, edges: I, vwgt: Vec<u64>) -> Self
    where
        I: IntoIterator<Item = (u32, u32, u64)>,
    {
        assert_eq!(vwgt.len(), n);
        let mut arcs: Vec<(u32, u32, u64)> = Vec::new();
        for (u, v, w) in edges {
            assert!((u as usize) < n && (v as usize) < n, "edge ({u},{v}) out of range");
            if u != v {
                arcs.push((u, v, w));
                arcs.push((v, u, w));
            }
        }
        Self::from_arcs(n, arcs, vwgt)
    }

    /// Builds from directed arcs that are already symmetric.
    fn from_arcs(n: usize, mut arcs: Vec<(u32, u32, u64)>, vwgt: Vec<u64>) -> Self {
        arcs.sort_unstable_by_key(|&(u, v, _)| (u, v));
        let mut xadj = vec![0usize; n + 1];
        let mut adjncy = Vec::with_capacity(arcs.len());
        let mut adjwgt: Vec<u64> = Vec::with_capacity(arcs.len());
        let mut last: Option<(u32, u32)> = None;
        for (u, v, w) in arcs {
            if last == Some((u, v)) {
                *adjwgt.last_mut().unwrap() += w;
                continue;
            }
            last = Some((u, v));
            xadj[u as usize + 1] += 1;
            adjncy.push(v);
            adjwgt.push(w);
        }
        for i in 0..n {
            xadj[i + 1] += xadj[i];
        }
        Self { xadj, adjncy, adjwgt, vwgt }
    }

    /// Assembles a graph from raw compressed arrays, validating every
    /// canonical invariant.
    pub fn from_csr(
        xadj: Vec<usize>,
        adjncy: Vec<u32>,
        adjwgt: Vec<u64>,
        vwgt: Vec<u64>,
    ) -> Result<Self> {
        let g = Self { xadj, adjncy, adjwgt, vwgt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vwgt.len();
        let bad = |m: String| Err(Error::Integrity(m));
        if self.xadj.len() != n + 1 || self.xadj[0] != 0 || self.xadj[n] != self.adjncy.len() {
            return bad("inconsistent offsets".into());
        }
        if self.adjwgt.len() != self.adjncy.len() {
            return bad("edge weight count differs from adjacency length".into());
        }
        for u in 0..n {
            if self.xadj[u] > self.xadj[u + 1] {
                return bad(format!("offsets decrease at vertex {u}"));
            }
            let nb = self.neighbors(u as u32);
            if !nb.windows(2).all(|w| w[0] < w[1]) {
                return bad(format!("adjacency of {u} is not strictly ascending"));
            }
            for (v, w) in self.edges(u as u32) {
                if v as usize >= n {
                    return bad(format!("neighbor {v} of {u} out of range"));
                }
                if v as usize == u {
                    return bad(format!("self-loop at {u}"));
                }
                if w == 0 {
                    return bad(format!("zero edge weight on ({u},{v})"));
                }
                if self.edge_weight(v, u as u32) != Some(w) {
                    return bad(format!("edge ({u},{v}) is not symmetric"));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.vwgt.len()
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.adjncy.len() / 2
    }

    pub fn xadj(&self) -> &[usize] {
        &self.xadj
    }

    pub fn adjncy(&self) -> &[u32] {
        &self.adjncy
    }

    pub fn adjwgt(&self) -> &[u64] {
        &self.adjwgt
    }

    pub fn vertex_weights(&self) -> &[u64] {
        &self.vwgt
    }

    #[inline]
    pub fn vertex_weight(&self, v: u32) -> u64 {
        self.vwgt[v as usize]
    }

    pub fn total_vertex_weight(&self) -> u64 {
        self.vwgt.iter().sum()
    }

    pub fn max_vertex_weight(&self) -> u64 {
        self.vwgt.iter().copied().max().unwrap_or(0)
    }

    /// Sum of all undirected edge weights.
    pub fn total_edge_weight(&self) -> u64 {
        self.adjwgt.iter().sum::<u64>() / 2
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        self.xadj[v as usize + 1] - self.xadj[v as usize]
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adjncy[self.xadj[v as usize]..self.xadj[v as usize + 1]]
    }

    #[inline]
    pub fn edges(&self, v: u32) -> impl Iterator<Item = (u32, u64)> + '_ {
        let r = self.xadj[v as usize]..self.xadj[v as usize + 1];
        self.adjncy[r.clone()].iter().copied().zip(self.adjwgt[r].iter().copied())
    }

    pub fn edge_weight(&self, u: u32, v: u32) -> Option<u64> {
        let start = self.xadj[u as usize];
        self.neighbors(u).binary_search(&v).ok().map(|i| self.adjwgt[start + i])
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`.
    pub fn edge_list(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        (0..self.n() as u32)
            .flat_map(move |u| self.edges(u).filter(move |&(v, _)| u < v).map(move |(v, w)| (u, v, w)))
    }

    /// Subgraph induced by `vertices`; vertex `vertices[i]` becomes `i`.
    pub fn induced_subgraph(&self, vertices: &[u32]) -> Graph {
        let mut local = vec![u32::MAX; self.n()];
        for (i, &v) in vertices.iter().enumerate() {
            local[v as usize] = i as u32;
        }
        let mut xadj = Vec::with_capacity(vertices.len() + 1);
        let mut adjncy = Vec::new();
        let mut adjwgt = Vec::new();
        xadj.push(0);
        let mut row: Vec<(u32, u64)> = Vec::new();
        for &v in vertices {
            row.clear();
            row.extend(self.edges(v).filter_map(|(u, w)| {
                let l = local[u as usize];
                (l != u32::MAX).then_some((l, w))
            }));
            row.sort_unstable_by_key(|&(u, _)| u);
            for &(u, w) in &row {
                adjncy.push(u);
                adjwgt.push(w);
            }
            xadj.push(adjncy.len());
        }
        let vwgt = vertices.iter().map(|&v| self.vwgt[v as usize]).collect();
        Graph { xadj, adjncy, adjwgt, vwgt }
    }

    /// Removes the given undirected edges (each `(u, v)` with any orientation).
    pub(crate) fn without_edges(&self, removed: &[(u32, u32, u64)]) -> Graph {
        let mut drop: Vec<(u32, u32)> = Vec::with_capacity(removed.len() * 2);
        for &(u, v, _) in removed {
            drop.push((u, v));
            drop.push((v, u));
        }
        drop.sort_unstable();
        let mut xadj = Vec::with_capacity(self.n() + 1);
        let mut adjncy = Vec::with_capacity(self.adjncy.len());
        let mut adjwgt = Vec::with_capacity(self.adjncy.len());
        xadj.push(0);
        for u in 0..self.n() as u32 {
            for (v, w) in self.edges(u) {
                if drop.binary_search(&(u, v)).is_err() {
                    adjncy.push(v);
                    adjwgt.push(w);
                }
            }
            xadj.push(adjncy.len());
        }
        Graph { xadj, adjncy, adjwgt, vwgt: self.vwgt.clone() }
    }

    /// Adds undirected edges that must not already be present.
    pub(crate) fn with_edges(&self, added: &[(u32, u32, u64)]) -> Graph {
        let mut arcs: Vec<(u32, u32, u64)> = self
            .edge_list()
            .chain(added.iter().copied())
            .flat_map(|(u, v, w)| [(u, v, w), (v, u, w)])
            .collect();
        arcs.shrink_to_fit();
        Graph::from_arcs(self.n(), arcs, self.vwgt.clone())
    }
}

/// One block id in `[0, k)` per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    blocks: Vec<u32>,
    k: u32,
}

impl Mapping {
    pub fn new(blocks: Vec<u32>, k: u32) -> Result<Self> {
        if let Some((v, &b)) = blocks.iter().enumerate().find(|(_, &b)| b >= k) {
            return Err(Error::Format(format!("vertex {v} has block {b}, expected < {k}")));
        }
        Ok(Self { blocks, k })
    }

    pub fn uniform(n: usize, k: u32) -> Self {
        assert!(k >= 1);
        Self { blocks: vec![0; n], k }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[u32] {
        &self.blocks
    }

    #[inline]
    pub fn block(&self, v: u32) -> u32 {
        self.blocks[v as usize]
    }

    pub fn into_blocks(self) -> Vec<u32> {
        self.blocks
    }

    /// Fine mapping that assigns every fine vertex the block of its coarse vertex.
    pub fn project(&self, projection: &[u32]) -> Mapping {
        Mapping { blocks: projection.iter().map(|&c| self.blocks[c as usize]).collect(), k: self.k }
    }

    /// Total vertex weight per block.
    pub fn block_weights(&self, g: &Graph) -> Vec<u64> {
        let mut w = vec![0u64; self.k as usize];
        for (v, &b) in self.blocks.iter().enumerate() {
            w[b as usize] += g.vertex_weight(v as u32);
        }
        w
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads a graph in METIS format. The optional `fmt` header field selects
/// edge weights (`1`), vertex weights (`10`) or both (`11`). Lines starting
/// with `%` are comments.
pub fn load_metis(path: impl AsRef<Path>) -> Result<Graph> {
    let file = fs::File::open(path.as_ref())?;
    parse_metis(BufReader::new(file))
}

pub fn parse_metis<R: BufRead>(reader: R) -> Result<Graph> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_content = || -> Result<Option<(usize, String)>> {
        for (no, line) in lines.by_ref() {
            let line = line?;
            if line.trim_start().starts_with('%') {
                continue;
            }
            return Ok(Some((no, line)));
        }
        Ok(None)
    };

    let (hline, header) = loop {
        match next_content()? {
            Some((no, l)) if !l.trim().is_empty() => break (no, l),
            Some(_) => continue,
            None => return Err(parse_err(1, "missing header")),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 2 || fields.len() > 3 {
        return Err(parse_err(hline, "header must be `n m [fmt]`"));
    }
    let n: usize = fields[0].parse().map_err(|_| parse_err(hline, "invalid vertex count"))?;
    let m: usize = fields[1].parse().map_err(|_| parse_err(hline, "invalid edge count"))?;
    let (has_ewgt, has_vwgt) = match fields.get(2).copied() {
        None => (false, false),
        Some(f) => match f.trim_start_matches('0') {
            "" => (false, false),
            "1" => (true, false),
            "10" => (false, true),
            "11" => (true, true),
            _ => return Err(parse_err(hline, format!("unsupported fmt `{f}`"))),
        },
    };

    let mut arcs: Vec<(u32, u32, u64)> = Vec::with_capacity(2 * m);
    let mut vwgt = Vec::with_capacity(n);
    let mut vertex_line = Vec::with_capacity(n);
    for u in 0..n {
        let (no, line) = next_content()?
            .ok_or_else(|| parse_err(hline, format!("expected {n} vertex lines, found {u}")))?;
        vertex_line.push(no);
        let mut toks = line.split_whitespace().map(|t| {
            t.parse::<u64>().map_err(|_| parse_err(no, format!("invalid number `{t}`")))
        });
        if has_vwgt {
            let w = toks.next().ok_or_else(|| parse_err(no, "missing vertex weight"))??;
            if w == 0 {
                return Err(parse_err(no, "vertex weight must be positive"));
            }
            vwgt.push(w);
        } else {
            vwgt.push(1);
        }
        while let Some(tok) = toks.next() {
            let v = tok?;
            if v == 0 || v as usize > n {
                return Err(parse_err(no, format!("neighbor {v} out of range 1..={n}")));
            }
            let w = if has_ewgt {
                let w = toks.next().ok_or_else(|| parse_err(no, "missing edge weight"))??;
                if w == 0 {
                    return Err(parse_err(no, "edge weight must be positive"));
                }
                w
            } else {
                1
            };
            let v = (v - 1) as u32;
            if v as usize == u {
                return Err(parse_err(no, "self-loop"));
            }
            arcs.push((u as u32, v, w));
        }
    }
    if let Some((no, l)) = next_content()? {
        if !l.trim().is_empty() {
            return Err(parse_err(no, format!("more than {n} vertex lines")));
        }
    }
    if arcs.len() != 2 * m {
        return Err(parse_err(
            hline,
            format!("header announces {m} edges but adjacency lists hold {} entries", arcs.len()),
        ));
    }

    arcs.sort_unstable_by_key(|&(u, v, _)| (u, v));
    let before = arcs.len();
    arcs.dedup_by(|b, a| {
        if (a.0, a.1) == (b.0, b.1) {
            a.2 += b.2;
            true
        } else {
            false
        }
    });
    if arcs.len() != before {
        warn!("merged {} parallel adjacency entries by summing weights", before - arcs.len());
    }
    for &(u, v, w) in &arcs {
        match arcs.binary_search_by_key(&(v, u), |&(a, b, _)| (a, b)) {
            Ok(i) if arcs[i].2 == w => {}
            Ok(i) => {
                return Err(parse_err(
                    vertex_line[u as usize],
                    format!(
                        "edge {}-{} has weight {w} but the reverse entry has {}",
                        u + 1,
                        v + 1,
                        arcs[i].2
                    ),
                ))
            }
            Err(_) => {
                return Err(parse_err(
                    vertex_line[u as usize],
                    format!("edge {}-{} has no reverse entry", u + 1, v + 1),
                ))
            }
        }
    }
    Ok(Graph::from_arcs(n, arcs, vwgt))
}

/// Writes a graph in METIS format, emitting weight columns only when some
/// weight differs from one.
pub fn write_metis(path: impl AsRef<Path>, g: &Graph) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    out.write_all(metis_string(g).as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn metis_string(g: &Graph) -> String {
    let ew = g.adjwgt.iter().any(|&w| w != 1);
    let vw = g.vwgt.iter().any(|&w| w != 1);
    let mut s = String::new();
    match (vw, ew) {
        (false, false) => writeln!(s, "{} {}", g.n(), g.m()),
        (false, true) => writeln!(s, "{} {} 1", g.n(), g.m()),
        (true, false) => writeln!(s, "{} {} 10", g.n(), g.m()),
        (true, true) => writeln!(s, "{} {} 11", g.n(), g.m()),
    }
    .unwrap();
    for u in 0..g.n() as u32 {
        let mut first = true;
        let mut sep = |s: &mut String| {
            if !first {
                s.push(' ');
            }
            first = false;
        };
        if vw {
            sep(&mut s);
            write!(s, "{}", g.vertex_weight(u)).unwrap();
        }
        for (v, w) in g.edges(u) {
            sep(&mut s);
            write!(s, "{}", v + 1).unwrap();
            if ew {
                write!(s, " {w}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

/// Writes one block id per line.
pub fn write_mapping(path: impl AsRef<Path>, m: &Mapping) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    for &b in m.blocks() {
        writeln!(out, "{b}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_mapping(path: impl AsRef<Path>, n: usize, k: u32) -> Result<Mapping> {
    let reader = BufReader::new(fs::File::open(path.as_ref())?);
    let mut blocks = Vec::with_capacity(n);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let b: u32 = t
            .parse()
            .map_err(|_| Error::Format(format!("line {}: invalid block id `{t}`", i + 1)))?;
        if b >= k {
            return Err(Error::Format(format!("line {}: block {b} not below k={k}", i + 1)));
        }
        blocks.push(b);
    }
    if blocks.len() != n {
        return Err(Error::Format(format!(
            "mapping has {} entries but the graph has {n} vertices",
            blocks.len()
        )));
    }
    Mapping::new(blocks, k)
}

/// Contracts every cluster into one vertex.
///
/// Cluster ids may be arbitrary; they are renumbered by first appearance in
/// vertex order. Returns the coarse graph and the fine-to-coarse projection.
pub fn contract(g: &Graph, cluster: &[u32]) -> (Graph, Vec<u32>) {
    assert_eq!(cluster.len(), g.n(), "cluster array length differs from vertex count");
    let n = g.n();
    let mut rename: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    let mut projection = Vec::with_capacity(n);
    for &c in cluster {
        let next = rename.len() as u32;
        projection.push(*rename.entry(c).or_insert(next));
    }
    let nc = rename.len();

    // bucket fine vertices by coarse vertex
    let mut start = vec![0usize; nc + 1];
    for &c in &projection {
        start[c as usize + 1] += 1;
    }
    for i in 0..nc {
        start[i + 1] += start[i];
    }
    let mut members = vec![0u32; n];
    let mut fill = start.clone();
    for (v, &c) in projection.iter().enumerate() {
        members[fill[c as usize]] = v as u32;
        fill[c as usize] += 1;
    }

    let mut vwgt = vec![0u64; nc];
    let mut xadj = Vec::with_capacity(nc + 1);
    let mut adjncy = Vec::new();
    let mut adjwgt = Vec::new();
    xadj.push(0);
    let mut acc = vec![0u64; nc];
    let mut touched: Vec<u32> = Vec::new();
    for c in 0..nc {
        for &v in &members[start[c]..start[c + 1]] {
            vwgt[c] += g.vertex_weight(v);
            for (u, w) in g.edges(v) {
                let cu = projection[u as usize];
                if cu as usize == c {
                    continue;
                }
                if acc[cu as usize] == 0 {
                    touched.push(cu);
                }
                acc[cu as usize] += w;
            }
        }
        touched.sort_unstable();
        for &cu in &touched {
            adjncy.push(cu);
            adjwgt.push(acc[cu as usize]);
            acc[cu as usize] = 0;
        }
        touched.clear();
        xadj.push(adjncy.len());
    }
    (Graph { xadj, adjncy, adjwgt, vwgt }, projection)
}
