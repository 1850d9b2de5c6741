use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use swprune::data::synthetic_blobs;
use swprune::graph::{characteristic_path_length, clustering_coefficient, rewire, ring_lattice};
use swprune::nn::NetworkSpec;
use swprune::pruner::{fc_geometry, layer_geometry, structure_layer, SmallWorldConfig};
use swprune::rng::seeded;
use swprune::Network;

fn graph_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph");
    for n in [200usize, 1000] {
        let g = rewire(&ring_lattice(n, 10).unwrap(), 0.01, &mut seeded(1)).unwrap();
        group.bench_with_input(BenchmarkId::new("path_length", n), &g, |b, g| {
            b.iter(|| characteristic_path_length(black_box(g)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("clustering", n), &g, |b, g| {
            b.iter(|| clustering_coefficient(black_box(g)))
        });
    }
    group.finish();
}

fn structuring(c: &mut Criterion) {
    let mut group = c.benchmark_group("structure_layer");
    let net = Network::init(NetworkSpec::lenet5(), 0).unwrap();
    let cfg = SmallWorldConfig::new(0.001, 0.9, 3);
    for li in net.trainable_layers() {
        let spec = &net.spec().layers[li];
        let geom = layer_geometry(spec).unwrap();
        let w = net.params(li).unwrap().weights.weights().clone();
        let label = format!("{}x{}", geom.rows, geom.cols);
        group.bench_function(BenchmarkId::new("lenet5", label), |b| {
            b.iter(|| structure_layer(black_box(&w), &geom, &cfg, 0).unwrap())
        });
    }
    let fc = Network::init(NetworkSpec::mlp(&[784, 128]), 0).unwrap();
    let w = fc.params(0).unwrap().weights.weights().clone();
    let geom = fc_geometry(784, 128).unwrap();
    group.bench_function("dense_784x128", |b| {
        b.iter(|| structure_layer(black_box(&w), &geom, &cfg, 0).unwrap())
    });
    group.finish();
}

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step");
    let data = synthetic_blobs(10, 784, 7, 0.1, 2).unwrap();
    let idx: Vec<usize> = (0..64).collect();
    let (x, y) = data.batch(&idx).unwrap();
    let mlp = Network::init(NetworkSpec::mlp(&[784, 128, 10]), 0).unwrap();
    group.bench_function("mlp_784_128_10_batch64", |b| {
        b.iter(|| {
            let cache = mlp.forward(black_box(&x)).unwrap();
            mlp.backward(&cache, &y).unwrap()
        })
    });
    let lenet = Network::init(NetworkSpec::lenet5(), 0).unwrap();
    let xs = x.clone().reshape(vec![64, 1, 28, 28]).unwrap();
    group.sample_size(10);
    group.bench_function("lenet5_batch64", |b| {
        b.iter(|| {
            let cache = lenet.forward(black_box(&xs)).unwrap();
            lenet.backward(&cache, &y).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, graph_metrics, structuring, forward_backward);
criterion_main!(benches);
