//! Undirected graphs for the Watts–Strogatz reference experiments: ring
//! lattices, edge rewiring, and the classic clustering coefficient and
//! characteristic path length.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::rng::{derive_seed_path, seeded, Rng};

/// Rewired graphs that come out disconnected are regenerated with a fresh
/// derived seed at most this many times.
pub const MAX_CONNECT_RETRIES: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adjacency: Vec<Vec<usize>>,
}

impl UndirectedGraph {
    pub fn empty(node_count: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); node_count],
        }
    }

    /// Build from an edge list. Self-loops and duplicate edges are rejected.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(node_count);
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at {a}")));
            }
            if !g.insert_edge(a, b) {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    fn insert_edge(&mut self, a: usize, b: usize) -> bool {
        match self.adjacency[a].binary_search(&b) {
            Ok(_) => false,
            Err(pos) => {
                self.adjacency[a].insert(pos, b);
                let pos = self.adjacency[b].binary_search(&a).unwrap_err();
                self.adjacency[b].insert(pos, a);
                true
            }
        }
    }

    fn remove_edge(&mut self, a: usize, b: usize) {
        if let Ok(pos) = self.adjacency[a].binary_search(&b) {
            self.adjacency[a].remove(pos);
        }
        if let Ok(pos) = self.adjacency[b].binary_search(&a) {
            self.adjacency[b].remove(pos);
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        bfs_distances(self, 0).iter().all(|d| d.is_some())
    }
}

/// Circulant graph: node `i` is joined to `i ± 1 … i ± k/2 (mod n)`.
pub fn ring_lattice(n: usize, k: usize) -> Result<UndirectedGraph> {
    if n < 3 {
        return Err(Error::invalid(format!(
            "ring lattice needs n >= 3, got {n}"
        )));
    }
    if !k.is_multiple_of(2) || k == 0 {
        return Err(Error::invalid(format!(
            "degree k must be even and positive, got {k}"
        )));
    }
    if k >= n {
        return Err(Error::invalid(format!(
            "degree k = {k} must be below n = {n}"
        )));
    }
    let mut g = UndirectedGraph::empty(n);
    for i in 0..n {
        for off in 1..=k / 2 {
            g.insert_edge(i, (i + off) % n);
        }
    }
    Ok(g)
}

/// Watts–Strogatz rewiring. Lattice edges `(i, i + off)` are visited
/// offset-major, node-minor; each is detached from its far endpoint with
/// probability `p` and reattached to a uniform node that is neither `i`
/// nor already adjacent to `i`. Edge count is preserved.
pub fn rewire(g: &UndirectedGraph, p: f64, rng: &mut Rng) -> Result<UndirectedGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "rewiring probability {p} outside [0, 1]"
        )));
    }
    let n = g.node_count();
    let mut out = g.clone();
    if p == 0.0 {
        return Ok(out);
    }
    let max_off = (0..n).map(|i| g.degree(i)).max().unwrap_or(0) / 2;
    for off in 1..=max_off {
        for i in 0..n {
            let j = (i + off) % n;
            if !g.has_edge(i, j) || !out.has_edge(i, j) {
                continue;
            }
            if rng.random::<f64>() >= p {
                continue;
            }
            // a node already adjacent to everything keeps its edge
            if out.degree(i) >= n - 1 {
                continue;
            }
            let target = loop {
                let t = rng.random_range(0..n);
                if t != i && !out.has_edge(i, t) {
                    break t;
                }
            };
            out.remove_edge(i, j);
            out.insert_edge(i, target);
        }
    }
    Ok(out)
}

/// Mean local clustering coefficient; nodes of degree < 2 contribute 0.
pub fn clustering_coefficient(g: &UndirectedGraph) -> f64 {
    let n = g.node_count();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|v| {
            let adj = g.neighbors(v);
            let d = adj.len();
            if d < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (idx, &a) in adj.iter().enumerate() {
                links += adj[idx + 1..].iter().filter(|&&b| g.has_edge(a, b)).count();
            }
            links as f64 / (d * (d - 1) / 2) as f64
        })
        .sum();
    total / n as f64
}

fn bfs_distances(g: &UndirectedGraph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.node_count()];
    let mut queue = VecDeque::new();
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].expect("queued nodes have a distance");
        for &w in g.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Mean BFS hop distance over all unordered node pairs.
pub fn characteristic_path_length(g: &UndirectedGraph) -> Result<f64> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::invalid("path length needs at least two nodes"));
    }
    let mut total: u64 = 0;
    for s in 0..n {
        for d in bfs_distances(g, s).into_iter().skip(s + 1) {
            total += d.ok_or(Error::DisconnectedGraph)? as u64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(total as f64 / pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcPoint {
    pub p: f64,
    pub l: f64,
    pub c: f64,
    pub l0: f64,
    pub c0: f64,
}

impl LcPoint {
    pub fn l_ratio(&self) -> f64 {
        self.l / self.l0
    }

    pub fn c_ratio(&self) -> f64 {
        self.c / self.c0
    }
}

/// Logarithmic grid of `count` points from 1e-4 to 1 inclusive.
pub fn default_p_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..count)
            .map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

fn one_trial(
    lattice: &UndirectedGraph,
    p: f64,
    seed: u64,
    p_index: u64,
    trial: u64,
) -> Result<(f64, f64)> {
    for attempt in 0..=MAX_CONNECT_RETRIES {
        let mut rng = seeded(derive_seed_path(seed, &[p_index, trial, attempt]));
        let g = rewire(lattice, p, &mut rng)?;
        match characteristic_path_length(&g) {
            Ok(l) => return Ok((l, clustering_coefficient(&g))),
            Err(Error::DisconnectedGraph) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DisconnectedGraph)
}

/// Trial-averaged L and C for each `p`, normalised by the lattice values.
/// Trials run in parallel; each derives its seed from
/// `(seed, p index, trial, retry)` so output matches a sequential run.
pub fn lc_curve(
    n: usize,
    k: usize,
    p_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<LcPoint>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p = {p} outside [0, 1]")));
    }
    let lattice = ring_lattice(n, k)?;
    let l0 = characteristic_path_length(&lattice)?;
    let c0 = clustering_coefficient(&lattice);

    let jobs: Vec<(usize, usize)> = (0..p_values.len())
        .flat_map(|pi| (0..trials).map(move |t| (pi, t)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(pi, t)| one_trial(&lattice, p_values[pi], seed, pi as u64, t as u64))
        .collect::<Result<_>>()?;

    Ok(p_values
        .iter()
        .enumerate()
        .map(|(pi, &p)| {
            let chunk = &results[pi * trials..(pi + 1) * trials];
            // sequential sum in trial order keeps the mean reproducible
            let l = chunk.iter().map(|r| r.0).sum::<f64>() / trials as f64;
            let c = chunk.iter().map(|r| r.1).sum::<f64>() / trials as f64;
            LcPoint { p, l, c, l0, c0 }
        })
        .collect())
}

pub const LC_CURVE_HEADER: &str = "p,trial_mean_L,trial_mean_C,L_over_L0,C_over_C0";

pub fn write_lc_csv<W: Write>(mut out: W, points: &[LcPoint]) -> std::io::Result<()> {
    writeln!(out, "{LC_CURVE_HEADER}")?;
    for pt in points {
        writeln!(
            out,
            "{},{},{},{},{}",
            sig10(pt.p),
            sig10(pt.l),
            sig10(pt.c),
            sig10(pt.l_ratio()),
            sig10(pt.c_ratio())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> UndirectedGraph {
        let edges: Vec<_> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect();
        UndirectedGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn lattice_shapes() {
        let g = ring_lattice(4, 2).unwrap();
        assert_eq!(g.edge_count(), 4);
        let g = ring_lattice(3, 2).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g, complete(3));

        let g = ring_lattice(8, 4).unwrap();
        assert_eq!(g.edge_count(), 16);
        for i in 0..8 {
            let mut expect: Vec<usize> = [1, 2, 6, 7].iter().map(|o| (i + o) % 8).collect();
            expect.sort_unstable();
            assert_eq!(g.neighbors(i), expect.as_slice());
        }
    }

    #[test]
    fn lattice_rejects_bad_params() {
        assert!(ring_lattice(8, 3).is_err());
        assert!(ring_lattice(8, 8).is_err());
        assert!(ring_lattice(2, 2).is_err());
    }

    #[test]
    fn zero_rewiring_is_identity() {
        let g = ring_lattice(30, 6).unwrap();
        let mut rng = seeded(5);
        assert_eq!(rewire(&g, 0.0, &mut rng).unwrap(), g);
    }

    #[test]
    fn rewire_is_deterministic() {
        let g = ring_lattice(8, 2).unwrap();
        let a = rewire(&g, 0.5, &mut seeded(11)).unwrap();
        let b = rewire(&g, 0.5, &mut seeded(11)).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.edge_count(), 8);
    }

    #[test]
    fn full_rewiring_reaches_random_regime() {
        let g = ring_lattice(1000, 10).unwrap();
        let r = rewire(&g, 1.0, &mut seeded(3)).unwrap();
        assert_eq!(r.edge_count(), 5000);
        // random graph with mean degree k has C ≈ k / n = 0.01
        let c = clustering_coefficient(&r);
        assert!(c < 0.03, "C = {c}");
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(clustering_coefficient(&complete(3)), 1.0);
        assert_eq!(clustering_coefficient(&ring_lattice(20, 2).unwrap()), 0.0);
        assert_eq!(clustering_coefficient(&ring_lattice(20, 4).unwrap()), 0.5);
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(characteristic_path_length(&complete(4)).unwrap(), 1.0);
        assert_eq!(characteristic_path_length(&complete(2)).unwrap(), 1.0);
        let l = characteristic_path_length(&ring_lattice(8, 2).unwrap()).unwrap();
        assert_eq!(l, 16.0 / 7.0);
    }

    #[test]
    fn disconnected_graph_errors() {
        let g = UndirectedGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            characteristic_path_length(&g),
            Err(Error::DisconnectedGraph)
        ));
    }

    #[test]
    fn p_zero_curve_normalises_to_one() {
        let pts = lc_curve(40, 4, &[0.0], 2, 1).unwrap();
        assert_eq!(pts[0].l_ratio(), 1.0);
        assert_eq!(pts[0].c_ratio(), 1.0);
    }

    #[test]
    fn grid_endpoints() {
        let g = default_p_grid(9);
        assert_eq!(g.len(), 9);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert_eq!(g[8], 1.0);
    }

    #[test]
    fn csv_layout() {
        let pts = lc_curve(20, 4, &[0.0], 1, 0).unwrap();
        let mut buf = Vec::new();
        write_lc_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LC_CURVE_HEADER));
        assert!(lines.next().unwrap().ends_with(",1,1"));
    }
}
