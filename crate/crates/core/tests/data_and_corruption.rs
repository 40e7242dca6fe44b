mod common;

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;

use common::*;
use robustgcn::corrupt::{
    corrupt_features, fill, make_missing, CorruptionSpec, ElementMask, FillStrategy, MissingMask,
    Regime,
};
use robustgcn::data::{
    knn_graph, load_dataset, make_splits, save_dataset, synth_communities, FeatureFormat,
    SplitSpec, SynthSpec, TrainSelection,
};
use robustgcn::graph::Graph;

fn fixture() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mini5"))
}

#[test]
fn mini_fixture_loads_with_declared_counts() {
    let ds = load_dataset(fixture()).unwrap();
    assert_eq!((ds.n(), ds.d(), ds.classes), (5, 4, 2));
    assert_eq!(ds.name, "mini5");
    // the 2→0 and 2↔3 duplicates collapse; node 4 is isolated
    assert_eq!(ds.graph.edge_count(), 4);
    assert_eq!(ds.graph.adjacency().row(4).count(), 0);
    assert_eq!(ds.features.row(4).sum(), 0.0);
    assert_eq!(ds.metadata["zero_feature_nodes"], "4");
    assert_eq!(ds.labels, vec![0, 0, 1, 1, 0]);
}

#[test]
fn save_then_load_is_identity() {
    let ds = synth_communities(&SynthSpec {
        classes: 3,
        nodes_per_class: 15,
        ..SynthSpec::default()
    })
    .unwrap();
    for format in [FeatureFormat::Sparse, FeatureFormat::Dense] {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path(), format).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.classes, ds.classes);
    }
}

#[test]
fn weighted_bundles_keep_weights() {
    let g = Graph::from_undirected_edges(3, &[(0, 1, 2.5), (1, 2, 0.5)]).unwrap();
    let ds = robustgcn::data::Dataset {
        name: "w".into(),
        graph: g.clone(),
        features: Array2::eye(3),
        labels: vec![0, 1, 0],
        classes: 2,
        metadata: Default::default(),
    };
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path(), FeatureFormat::Sparse).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap().graph, g);
}

#[test]
fn splits_are_disjoint_over_many_seeds() {
    let ds = synth_communities(&SynthSpec {
        classes: 7,
        nodes_per_class: 60,
        ..SynthSpec::default()
    })
    .unwrap();
    for seed in 0..100 {
        let spec = SplitSpec {
            train: TrainSelection::PerClass(20),
            val_size: 100,
            test_size: Some(150),
            seed,
        };
        let split = make_splits(&ds, &spec).unwrap();
        split.check_disjoint().unwrap();
        // the citation-benchmark rule: 20 per class, 7 classes
        assert_eq!(split.train.len(), 140);
        for c in 0..7 {
            assert_eq!(
                split.train.iter().filter(|&&i| ds.labels[i] == c).count(),
                20
            );
        }
        assert_eq!((split.val.len(), split.test.len()), (100, 150));
    }
}

#[test]
fn block_model_density_matches_probabilities() {
    let spec = SynthSpec {
        classes: 3,
        nodes_per_class: 30,
        p_in: 0.2,
        p_out: 0.03,
        ..SynthSpec::default()
    };
    let (mut intra, mut inter) = (0usize, 0usize);
    for seed in 0..20 {
        let ds = synth_communities(&SynthSpec { seed, ..spec }).unwrap();
        for (i, j, _) in ds.graph.edges() {
            if ds.labels[i] == ds.labels[j] {
                intra += 1;
            } else {
                inter += 1;
            }
        }
    }
    let npc = spec.nodes_per_class as f64;
    let k = spec.classes as f64;
    let intra_pairs = 20.0 * k * npc * (npc - 1.0) / 2.0;
    let inter_pairs = 20.0 * k * (k - 1.0) / 2.0 * npc * npc;
    for (count, pairs, p) in [
        (intra, intra_pairs, spec.p_in),
        (inter, inter_pairs, spec.p_out),
    ] {
        let se = (pairs * p * (1.0 - p)).sqrt();
        assert!(
            (count as f64 - pairs * p).abs() <= 3.0 * se,
            "{count} vs {}",
            pairs * p
        );
    }
}

/// Softmax regression by plain gradient descent; the graph is ignored.
fn logistic_accuracy(
    x: &Array2<f64>,
    labels: &[usize],
    classes: usize,
    train: &[usize],
    test: &[usize],
) -> f64 {
    let d = x.ncols();
    let mut w = Array2::<f64>::zeros((d + 1, classes));
    let with_bias = |i: usize| -> Array1<f64> {
        let mut v = Array1::ones(d + 1);
        v.slice_mut(ndarray::s![..d]).assign(&x.row(i));
        v
    };
    for _ in 0..500 {
        let mut grad = Array2::<f64>::zeros(w.raw_dim());
        for &i in train {
            let xi = with_bias(i);
            let logits = xi.dot(&w);
            let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let e = logits.mapv(|v| (v - max).exp());
            let p = &e / e.sum();
            for c in 0..classes {
                let g = p[c] - if labels[i] == c { 1.0 } else { 0.0 };
                grad.column_mut(c).scaled_add(g, &xi);
            }
        }
        w.scaled_add(-0.5 / train.len() as f64, &grad);
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let logits = with_bias(i).dot(&w);
            robustgcn::nn::argmax(logits.view()) == labels[i]
        })
        .count();
    correct as f64 / test.len() as f64
}

#[test]
fn block_model_features_are_linearly_separable() {
    let ds = synth_communities(&SynthSpec::default()).unwrap();
    let (train, test): (Vec<usize>, Vec<usize>) = (0..ds.n()).partition(|i| i % 2 == 0);
    let acc = logistic_accuracy(&ds.features, &ds.labels, ds.classes, &train, &test);
    assert!(acc > 0.9, "{acc}");
}

#[test]
fn knn_graph_on_block_features_is_mostly_homophilous() {
    let ds = synth_communities(&SynthSpec::default()).unwrap();
    let g = knn_graph(&ds.features, 10).unwrap();
    g.validate().unwrap();
    let same = g
        .edges()
        .filter(|&(i, j, _)| ds.labels[i] == ds.labels[j])
        .count();
    assert!(same as f64 > 0.8 * g.edge_count() as f64);
}

fn count_changed(a: &Array2<f64>, b: &Array2<f64>) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn missing_counts_are_exact(n in 1usize..30, d in 1usize..6, level in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let h = gaussian(n, d, &mut r);
        let m = make_missing(&h, &CorruptionSpec::new(Regime::MissingElements, level, seed).unwrap()).unwrap();
        let MissingMask::Elements(em) = &m.mask else { panic!("element mask expected") };
        prop_assert_eq!(em.missing_count(), (level * (n * d) as f64).floor() as usize);
        for ((&v, &t), &o) in m.features.iter().zip(&h).zip(em.observed()) {
            let ok = if o { v == t } else { v.is_nan() };
            prop_assert!(ok);
        }
        prop_assert_eq!(&m.truth, &h);

        let m = make_missing(&h, &CorruptionSpec::new(Regime::MissingNodes, level, seed).unwrap()).unwrap();
        let MissingMask::Nodes(tau) = &m.mask else { panic!("node mask expected") };
        prop_assert_eq!(tau.missing_count(), (level * n as f64).floor() as usize);
        for (i, row) in m.features.axis_iter(Axis(0)).enumerate() {
            prop_assert!(row.iter().all(|v| v.is_nan() != tau.observed()[i]));
        }
    }

    #[test]
    fn corruption_touches_only_selected_entries(n in 2usize..30, d in 1usize..6, level in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let h = Array2::from_shape_simple_fn((n, d), || r.random_range(0.0..10.0));
        let out = corrupt_features(&h, &CorruptionSpec::new(Regime::RandomValue, level, seed).unwrap()).unwrap();
        let k = (level * (n * d) as f64).floor() as usize;
        // n ≥ 2 gives each column a nondegenerate range, so a redraw never equals the original
        prop_assert_eq!(count_changed(&h, &out), k);
        for (j, col) in out.axis_iter(Axis(1)).enumerate() {
            let lo = h.column(j).fold(f64::INFINITY, |m, &v| m.min(v));
            let hi = h.column(j).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            prop_assert!(col.iter().all(|&v| v >= lo && v <= hi));
        }

        let b = h.mapv(|v| if v > 5.0 { 1.0 } else { 0.0 });
        let flipped = corrupt_features(&b, &CorruptionSpec::new(Regime::BinaryFlip, level, seed).unwrap()).unwrap();
        prop_assert!(count_changed(&b, &flipped) <= k);
        prop_assert!(flipped.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn fill_keeps_known_entries(n in 2usize..20, d in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(n, 0.3, false, &mut r);
        let h = gaussian(n, d, &mut r);
        let mut observed = Array2::from_shape_simple_fn((n, d), || r.random::<f64>() < 0.6);
        observed[[0, 0]] = true;
        let mask = ElementMask::new(observed.clone());
        let holes = Array2::from_shape_fn((n, d), |(i, j)| if observed[[i, j]] { h[[i, j]] } else { f64::NAN });
        for strategy in [FillStrategy::Zf, FillStrategy::Mf, FillStrategy::Nmf] {
            let f = fill(&holes, &mask, strategy, &g).unwrap();
            prop_assert!(f.iter().all(|v| v.is_finite()));
            for ((&o, &a), &b) in observed.iter().zip(&f).zip(&h) {
                if o { prop_assert_eq!(a, b); }
            }
        }
    }
}

#[test]
fn corruption_is_reproducible_per_seed() {
    let mut r = rng(0);
    let h = gaussian(20, 4, &mut r);
    let spec = CorruptionSpec::new(Regime::RandomValue, 0.4, 77).unwrap();
    assert_eq!(
        corrupt_features(&h, &spec).unwrap(),
        corrupt_features(&h, &spec).unwrap()
    );
    let other = CorruptionSpec { seed: 78, ..spec };
    assert_ne!(
        corrupt_features(&h, &spec).unwrap(),
        corrupt_features(&h, &other).unwrap()
    );
}
