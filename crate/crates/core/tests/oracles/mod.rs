//! Naive reference implementations shared by the property and acceptance
//! suites. Deliberately slow and direct.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng as _;
use swprune::graph::UndirectedGraph;
use swprune::nn::{LayerSpec, Network, NetworkSpec};
use swprune::rng::{seeded, Rng};
use swprune::Tensor;

pub fn adjacency(g: &UndirectedGraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut a = vec![vec![false; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

/// Mean local clustering by checking every pair of nodes around every node.
pub fn naive_clustering(g: &UndirectedGraph) -> f64 {
    let a = adjacency(g);
    let n = a.len();
    let mut total = 0.0;
    for v in 0..n {
        let nb: Vec<usize> = (0..n).filter(|&u| a[v][u]).collect();
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut links = 0usize;
        for x in 0..d {
            for y in x + 1..d {
                if a[nb[x]][nb[y]] {
                    links += 1;
                }
            }
        }
        total += links as f64 / (d * (d - 1) / 2) as f64;
    }
    total / n as f64
}

/// Floyd-Warshall mean over unordered pairs; None when disconnected.
pub fn naive_path_length(g: &UndirectedGraph) -> Option<f64> {
    let a = adjacency(g);
    let n = a.len();
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if a[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut total = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] >= INF {
                return None;
            }
            total += d[i][j] as u64;
        }
    }
    Some(total as f64 / (n * (n - 1) / 2) as f64)
}

/// Random simple graph on `n` nodes with edge probability `density`.
pub fn random_graph(n: usize, density: f64, rng: &mut Rng) -> UndirectedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < density {
                edges.push((u, v));
            }
        }
    }
    UndirectedGraph::from_edges(n, &edges).unwrap()
}

/// Dense masks `(rows = outputs, cols = inputs)` of every dense layer at or
/// after `from`, in order.
pub fn dense_masks(net: &Network, from: usize) -> Vec<(usize, usize, Vec<u8>)> {
    net.spec()
        .layers
        .iter()
        .enumerate()
        .skip(from)
        .filter_map(|(i, l)| match *l {
            LayerSpec::Dense { inputs, outputs } => Some((
                outputs,
                inputs,
                net.params(i).unwrap().weights.mask().to_vec(),
            )),
            _ => None,
        })
        .collect()
}

/// Number of distinct mask paths from input `unit` of the first mask to
/// output `class` of the last, by explicit enumeration.
pub fn count_paths(masks: &[(usize, usize, Vec<u8>)], unit: usize, class: usize) -> usize {
    fn walk(masks: &[(usize, usize, Vec<u8>)], node: usize, class: usize) -> usize {
        let Some(((rows, cols, m), rest)) = masks.split_first() else {
            return (node == class) as usize;
        };
        (0..*rows)
            .filter(|&o| m[o * cols + node] == 1)
            .map(|o| walk(rest, o, class))
            .sum()
    }
    walk(masks, unit, class)
}

/// `units × classes` relation by path enumeration.
pub fn naive_relation(net: &Network, layer: usize) -> Vec<u8> {
    let masks = dense_masks(net, layer);
    let units = masks[0].1;
    let classes = masks.last().unwrap().0;
    let mut bits = vec![0u8; units * classes];
    for u in 0..units {
        for c in 0..classes {
            bits[u * classes + c] = (count_paths(&masks, u, c) > 0) as u8;
        }
    }
    bits
}

/// `(L, C, per-class counts)` straight from the definitions.
pub fn naive_lc(bits: &[u8], units: usize, classes: usize) -> (f64, f64, Vec<usize>) {
    let per_class: Vec<usize> = (0..classes)
        .map(|c| (0..units).filter(|&u| bits[u * classes + c] == 1).count())
        .collect();
    let per_unit: Vec<usize> = (0..units)
        .map(|u| (0..classes).filter(|&c| bits[u * classes + c] == 1).count())
        .collect();
    let l = per_class
        .iter()
        .map(|&n| n as f64 / units as f64)
        .sum::<f64>()
        / classes as f64;
    let c = per_unit
        .iter()
        .map(|&n| n as f64 / classes as f64)
        .sum::<f64>()
        / units as f64;
    (l, c, per_class)
}

/// MLP with 1 to 3 dense layers of at most 10 units and random masks.
pub fn random_masked_mlp(seed: u64) -> Network {
    let mut rng = seeded(seed);
    let depth = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=10)).collect();
    let density = rng.random_range(0.1..0.9);
    let mut net = Network::init(NetworkSpec::mlp(&sizes), seed).unwrap();
    for li in net.trainable_layers() {
        let w = &mut net.params_mut(li).unwrap().weights;
        let mask = (0..w.len())
            .map(|_| (rng.random::<f64>() < density) as u8)
            .collect();
        w.set_mask(mask).unwrap();
    }
    net
}

/// 13 units feeding two classes through a 2-unit layer: the first cluster
/// holds units 0..7, the second unit 0 and units 6..13, so unit 0 and unit
/// 6 reach both classes.
pub fn two_class_fixture() -> Network {
    let mut net = Network::init(NetworkSpec::mlp(&[13, 2, 2]), 0).unwrap();
    let mut m0 = vec![0u8; 2 * 13];
    m0[..7].fill(1);
    m0[13] = 1;
    m0[13 + 6..].fill(1);
    net.params_mut(0).unwrap().weights.set_mask(m0).unwrap();
    net.params_mut(2)
        .unwrap()
        .weights
        .set_mask(vec![1, 0, 0, 1])
        .unwrap();
    net
}

/// Smallest distance of any relu input from zero or any pool maximum from
/// the runner-up in its window.
pub fn kink_margin(net: &Network, x: &Tensor) -> f32 {
    let cache = net.forward(x).unwrap();
    let mut margin = f32::INFINITY;
    for (i, layer) in net.spec().layers.iter().enumerate() {
        let a = &cache.activations[i];
        match *layer {
            LayerSpec::Relu => {
                margin = a.data().iter().fold(margin, |m, v| m.min(v.abs()));
            }
            LayerSpec::Maxpool { size } => {
                let d = a.dims();
                let (h, w) = (d[2], d[3]);
                for plane in a.data().chunks_exact(h * w) {
                    for oy in 0..h / size {
                        for ox in 0..w / size {
                            let mut v: Vec<f32> = (0..size * size)
                                .map(|k| plane[(oy * size + k / size) * w + ox * size + k % size])
                                .collect();
                            v.sort_by(|a, b| b.total_cmp(a));
                            // windows of dead relu units have no gradient either way
                            if v[0] > 0.0 {
                                margin = margin.min(v[0] - v[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    margin
}
