mod oracles;

use proptest::prelude::*;
use swprune::data::{read_checkpoint, synthetic_blobs, write_checkpoint, Checkpoint};
use swprune::graph::{characteristic_path_length, clustering_coefficient, rewire, ring_lattice};
use swprune::harness::{train, TrainConfig};
use swprune::metrics::{fc_lc, fc_reachability};
use swprune::nn::NetworkSpec;
use swprune::pruner::{
    conv_geometry, divide_factor, fc_geometry, kept_count, magnitude_mask, partition_regions,
    rewiring_probabilities, structure_layer, SmallWorldConfig,
};
use swprune::rng::seeded;
use swprune::{Network, Tensor};

fn weights(rows: usize, cols: usize, seed: u64) -> Tensor {
    use rand::Rng as _;
    let mut rng = seeded(seed);
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_metrics_match_oracle(n in 3usize..=12, density in 0.2f64..0.9, seed in any::<u64>()) {
        let g = oracles::random_graph(n, density, &mut seeded(seed));
        prop_assert_eq!(clustering_coefficient(&g), oracles::naive_clustering(&g));
        match oracles::naive_path_length(&g) {
            Some(l) => prop_assert_eq!(characteristic_path_length(&g).unwrap(), l),
            None => prop_assert!(characteristic_path_length(&g).is_err()),
        }
    }

    #[test]
    fn rewiring_keeps_edge_count(half_k in 1usize..4, extra in 1usize..30, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = 2 * half_k;
        let lattice = ring_lattice(k + extra, k).unwrap();
        let g = rewire(&lattice, p, &mut seeded(seed)).unwrap();
        prop_assert_eq!(g.edge_count(), lattice.edge_count());
        for v in 0..g.node_count() {
            prop_assert!(!g.has_edge(v, v));
        }
    }

    #[test]
    fn probabilities_split_p(n in 1usize..5000, m in 1usize..5000, p in 0.0f64..=1.0) {
        let (pa, pb) = rewiring_probabilities(&fc_geometry(n, m).unwrap(), p).unwrap();
        prop_assert!((pa + pb - p).abs() <= 1e-12);
        prop_assert!(pa >= 0.0 && pb >= 0.0);
    }

    #[test]
    fn partition_is_complementary(rows in 1usize..40, cols in 1usize..40, df in 0.0f64..=1.0) {
        let part = partition_regions(rows, cols, df).unwrap();
        let a = part.delta_a();
        let width = ((df * cols as f64).ceil() as usize).min(cols);
        for r in 0..rows {
            let row_b = &part.delta_b()[r * cols..(r + 1) * cols];
            let row_a = &a[r * cols..(r + 1) * cols];
            prop_assert!(row_a.iter().zip(row_b).all(|(x, y)| x + y == 1));
            prop_assert_eq!(row_b.iter().filter(|&&b| b == 1).count(), width);
        }
    }

    #[test]
    fn conv_divide_factor_in_range(op in 1usize..20, ip in 1usize..20, k in 1usize..6, p in 0.0f64..=1.0) {
        let g = conv_geometry(op, ip, k).unwrap();
        let df = divide_factor(&g, p);
        prop_assert!((0.0..=p).contains(&df));
        let (pa, pb) = rewiring_probabilities(&g, p).unwrap();
        prop_assert!((pa + pb - p).abs() <= 1e-12);
    }

    #[test]
    fn mask_nnz_is_exact(rows in 1usize..30, cols in 1usize..30, theta in 0.0f64..=1.0, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let w = weights(rows, cols, seed);
        let s = structure_layer(&w, &fc_geometry(cols, rows).unwrap(), &SmallWorldConfig::new(p, theta, seed), 0).unwrap();
        let size = rows * cols;
        prop_assert_eq!(s.kept(), ((1.0 - theta) * size as f64).round() as usize);
        prop_assert_eq!(s.kept(), kept_count(size, theta));
    }

    #[test]
    fn masks_nest_in_theta(rows in 1usize..30, cols in 1usize..30, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0, seed in any::<u64>()) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let w = weights(rows, cols, seed);
        let s = structure_layer(&w, &fc_geometry(cols, rows).unwrap(), &SmallWorldConfig::new(0.3, lo, seed), 0).unwrap();
        let (a, b) = (s.mask_at(lo), s.mask_at(hi));
        prop_assert_eq!(&a, &s.mask);
        prop_assert!(b.iter().zip(&a).all(|(&x, &y)| x <= y));
    }

    #[test]
    fn zero_p_is_magnitude_pruning(rows in 1usize..30, cols in 1usize..30, theta in 0.0f64..=1.0, seed in any::<u64>()) {
        let w = weights(rows, cols, seed);
        let s = structure_layer(&w, &fc_geometry(cols, rows).unwrap(), &SmallWorldConfig::new(0.0, theta, seed), 0).unwrap();
        prop_assert_eq!(s.mask, magnitude_mask(w.data(), theta));
    }

    #[test]
    fn reachability_matches_enumeration(seed in any::<u64>()) {
        let net = oracles::random_masked_mlp(seed);
        for li in net.trainable_layers() {
            let rel = fc_reachability(&net, li).unwrap();
            prop_assert_eq!(rel.bits(), &oracles::naive_relation(&net, li)[..]);
            let report = fc_lc(&rel, li).unwrap();
            let (l, c, counts) = oracles::naive_lc(rel.bits(), rel.units(), rel.classes());
            prop_assert_eq!(report.l, l);
            prop_assert_eq!(report.c, c);
            prop_assert_eq!(&report.per_class_counts, &counts);
            // every connection counted once from each side
            prop_assert_eq!(report.connections(), report.per_unit_class_counts.iter().sum::<usize>());
        }
    }

    #[test]
    fn checkpoint_round_trip(sizes in prop::collection::vec(1usize..8, 2..4), theta in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut net = Network::init(NetworkSpec::mlp(&sizes), seed).unwrap();
        for li in net.trainable_layers() {
            let w = &mut net.params_mut(li).unwrap().weights;
            let m = magnitude_mask(w.weights().data(), theta);
            w.set_mask(m).unwrap();
        }
        let ck = Checkpoint::from_network(&net, serde_json::json!({"seed": seed})).unwrap();
        let bytes = write_checkpoint(&ck).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(write_checkpoint(&back).unwrap(), bytes);
        let again = back.to_network().unwrap();
        for li in net.trainable_layers() {
            prop_assert_eq!(again.params(li), net.params(li));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn training_preserves_masks(theta in 0.0f64..0.95, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let data = synthetic_blobs(3, 6, 20, 0.1, seed).unwrap();
        let mut net = Network::init(NetworkSpec::mlp(&[6, 8, 3]), seed).unwrap();
        let sw = SmallWorldConfig::new(p, theta, seed);
        let layers = swprune::pruner::structure_network(&net, &sw).unwrap();
        swprune::pruner::apply_structure(&mut net, &layers).unwrap();
        let masks: Vec<Vec<u8>> = net.trainable_layers().iter().map(|&li| net.params(li).unwrap().weights.mask().to_vec()).collect();
        let cfg = TrainConfig { epochs: 3, batch_size: 7, seed, ..TrainConfig::default() };
        let history = train(&mut net, &data, None, &cfg).unwrap();
        for (k, &li) in net.trainable_layers().iter().enumerate() {
            let w = &net.params(li).unwrap().weights;
            prop_assert_eq!(w.mask(), &masks[k][..]);
            for (v, m) in w.weights().data().iter().zip(w.mask()) {
                if *m == 0 {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
        for e in &history.epochs {
            prop_assert_eq!(&e.mask_nnz, &masks.iter().map(|m| m.iter().filter(|&&b| b == 1).count()).collect::<Vec<_>>());
        }
    }
}
