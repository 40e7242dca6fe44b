mod common;

use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

use common::*;
use robustgcn::data::Split;
use robustgcn::graph::{build_normalized_adjacency, Graph};
use robustgcn::nn::{
    accuracy, adam_step, argmax, empirical_variance, glorot_init, read_history, train,
    write_history, AdamConfig, AdamState, HiddenPropagatorKind, InputPropagator, LayerWeights,
    Model, ModelParams, Regularization, TrainConfig,
};
use robustgcn::Error;

/// Two cliques joined by one edge; features are noisy class indicators.
fn separable(n_per: usize, seed: u64) -> (Graph, Array2<f64>, Vec<usize>) {
    let n = 2 * n_per;
    let mut edges = Vec::new();
    for c in 0..2 {
        for i in 0..n_per {
            for j in (i + 1)..n_per {
                edges.push((c * n_per + i, c * n_per + j, 1.0));
            }
        }
    }
    edges.push((0, n_per, 1.0));
    let g = Graph::from_undirected_edges(n, &edges).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i / n_per).collect();
    let mut r = rng(seed);
    let x = Array2::from_shape_fn(
        (n, 2),
        |(i, j)| if j == labels[i] { 1.0 } else { 0.0 } + 0.1 * r.random::<f64>(),
    );
    (g, x, labels)
}

fn prepared(g: &Graph, x: &Array2<f64>, classes: usize) -> Model {
    let s = build_normalized_adjacency(g).unwrap();
    Model::prepare(
        g,
        &s,
        x.view(),
        &InputPropagator::OneStep,
        HiddenPropagatorKind::OneStep,
        classes,
    )
    .unwrap()
}

#[test]
fn glorot_bounds_and_variance() {
    let mut r = rng(1);
    let w = glorot_init(3, 3, &mut r).w;
    assert!(w.iter().all(|v| v.abs() <= 1.0));
    let mut r1 = rng(5);
    let mut r2 = rng(5);
    assert_eq!(glorot_init(16, 7, &mut r1), glorot_init(16, 7, &mut r2));

    // 10⁴ draws at (16, 7): variance of U[−b, b] is b²/3
    let mut r = rng(9);
    let draws: Vec<f64> = (0..90)
        .flat_map(|_| glorot_init(16, 7, &mut r).w.into_iter())
        .take(10_000)
        .collect();
    let b2 = 6.0 / 23.0;
    let var = empirical_variance(&Array2::from_shape_vec((100, 100), draws).unwrap());
    assert!(
        (var - b2 / 3.0).abs() <= 0.1 * b2 / 3.0,
        "{var} vs {}",
        b2 / 3.0
    );
}

#[test]
fn zero_weights_give_uniform_predictions() {
    let (g, x, labels) = separable(3, 0);
    let model = prepared(&g, &x, 2);
    let params = ModelParams {
        layer1: LayerWeights {
            w: Array2::zeros((2, 4)),
        },
        layer2: LayerWeights {
            w: Array2::zeros((4, 2)),
        },
    };
    let cache = model.forward(&params).unwrap();
    assert!(cache.probs.iter().all(|&p| (p - 0.5).abs() < 1e-15));
    let loss = model
        .loss(&params, &labels, &[0, 1, 2], &Regularization::none())
        .unwrap();
    assert!((loss - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn hand_composed_tiny_network() {
    // n = 2, d = c = 1 path graph: S swaps the two rows
    let g = Graph::from_undirected_edges(2, &[(0, 1, 1.0)]).unwrap();
    let x = array![[2.0], [-1.0]];
    let model = prepared(&g, &x, 1);
    let params = ModelParams {
        layer1: LayerWeights { w: array![[1.0]] },
        layer2: LayerWeights { w: array![[1.0]] },
    };
    let cache = model.forward(&params).unwrap();
    // layer 1: S·X = [-1, 2] → relu [0, 2]; layer 2: S·[0, 2] = [2, 0]
    assert_eq!(cache.logits, array![[2.0], [0.0]]);
    assert!(cache.probs.iter().all(|&p| p == 1.0));
}

#[test]
fn loss_is_weight_decay_only_for_perfect_predictions() {
    let (g, x, labels) = separable(3, 0);
    let model = prepared(&g, &x, 2);
    let mut r = rng(0);
    let mut params = ModelParams::init(2, 4, 2, &mut r);
    params.layer2.w.fill(0.0);
    let reg = Regularization {
        weight_decay: 0.1,
        first_layer_only: false,
    };
    let penalty = 0.05 * params.layer1.w.iter().map(|v| v * v).sum::<f64>();
    let loss = model.loss(&params, &labels, &[0, 4], &reg).unwrap();
    // zero second layer → data term ln 2
    assert!((loss - 2f64.ln() - penalty).abs() < 1e-12);
    assert!(matches!(
        model.loss(&params, &labels, &[], &reg),
        Err(Error::Empty(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..10);
        let g = random_graph(n, 0.4, false, &mut r);
        let x = gaussian(n, 3, &mut r) * 5.0;
        let model = prepared(&g, &x, 4);
        let params = ModelParams::init(3, 5, 4, &mut r);
        let cache = model.forward(&params).unwrap();
        for row in cache.probs.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let all: Vec<usize> = (0..n).collect();
        prop_assert!(model.loss(&params, &labels, &all, &Regularization::none()).unwrap() >= 0.0);
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut r = rng(0);
    let mut params = ModelParams::init(3, 2, 2, &mut r);
    let start = params.clone();
    let mut grads = params.zeros_like();
    grads.layer1.w = array![[1.0, -2.0], [0.5, 0.0], [-3.0, 1e-3]];
    let mut state = AdamState::new(AdamConfig::default(), &params);
    adam_step(&mut state, &mut params, &grads);
    for ((p, s), g) in params
        .layer1
        .w
        .iter()
        .zip(&start.layer1.w)
        .zip(&grads.layer1.w)
    {
        let step = p - s;
        if *g == 0.0 {
            assert_eq!(step, 0.0);
        } else {
            assert!((step + 0.005 * g.signum()).abs() < 1e-6, "{step}");
        }
    }
    assert_eq!(params.layer2, start.layer2);
}

#[test]
fn adam_decreases_a_quadratic() {
    let mut r = rng(4);
    let mut params = ModelParams::init(4, 3, 2, &mut r);
    let f = |p: &ModelParams| {
        p.weights()
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
    };
    let start = f(&params);
    let mut state = AdamState::new(AdamConfig::default(), &params);
    for _ in 0..100 {
        let mut grads = params.clone();
        for w in grads.weights_mut() {
            w.mapv_inplace(|v| 2.0 * v);
        }
        adam_step(&mut state, &mut params, &grads);
    }
    assert!(f(&params) < start);
}

#[test]
fn separable_graph_is_learned_within_200_epochs() {
    let (g, x, labels) = separable(10, 1);
    let model = prepared(&g, &x, 2);
    let split = Split {
        train: vec![0, 1, 10, 11],
        val: vec![2, 3, 12, 13],
        test: (4..10).chain(14..20).collect(),
    };
    let cfg = TrainConfig {
        max_epochs: 200,
        adam: AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train(&model, &labels, &split, &cfg).unwrap();
    assert!(out.history.len() <= 200);
    assert_eq!(
        model.evaluate(&out.params, &labels, &split.test).unwrap(),
        1.0
    );
}

#[test]
fn early_stopping_and_determinism() {
    let (g, x, labels) = separable(10, 2);
    let model = prepared(&g, &x, 2);
    let split = Split {
        train: vec![0, 10],
        val: vec![1, 11],
        test: vec![2, 12],
    };
    let cfg = TrainConfig {
        max_epochs: 300,
        patience: 1,
        ..TrainConfig::default()
    };
    // validation nodes labelled against their features: fitting the training
    // nodes makes validation loss rise from the first step
    let mut flipped = labels.clone();
    for &i in &split.val {
        flipped[i] = 1 - flipped[i];
    }
    let stopped = train(&model, &flipped, &split, &cfg).unwrap();
    assert_eq!(stopped.best_epoch, 0);
    assert_eq!(stopped.history.len(), 2);
    assert!(stopped.history[1].val_loss > stopped.history[0].val_loss);

    let out = train(&model, &labels, &split, &cfg).unwrap();
    let best = out
        .history
        .iter()
        .map(|h| h.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, out.best_val_loss);

    let long = TrainConfig {
        patience: 50,
        ..cfg
    };
    let a = train(&model, &labels, &split, &long).unwrap();
    let b = train(&model, &labels, &split, &long).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    // the best validation loss never rises as patience grows
    assert!(a.best_val_loss <= out.best_val_loss);

    let mut buf = Vec::new();
    write_history(&mut buf, &a.history).unwrap();
    assert_eq!(read_history(buf.as_slice()).unwrap(), a.history);
}

#[test]
fn overlapping_split_is_rejected() {
    let (g, x, labels) = separable(3, 0);
    let model = prepared(&g, &x, 2);
    let split = Split {
        train: vec![0, 1],
        val: vec![1],
        test: vec![2],
    };
    assert!(train(&model, &labels, &split, &TrainConfig::default()).is_err());
}

#[test]
fn accuracy_counts() {
    let scores = array![[0.9, 0.1], [0.2, 0.8], [0.5, 0.5]];
    assert_eq!(accuracy(&scores, &[0, 1, 0], &[0, 1, 2]).unwrap(), 1.0);
    assert_eq!(argmax(scores.row(2)), 0);
    assert!(matches!(
        accuracy(&scores, &[0, 1, 0], &[]),
        Err(Error::Empty(_))
    ));
    // complementary node sets partition the correct count
    let labels = [1, 1, 1];
    let a = accuracy(&scores, &labels, &[0]).unwrap();
    let b = accuracy(&scores, &labels, &[1, 2]).unwrap();
    let all = accuracy(&scores, &labels, &[0, 1, 2]).unwrap();
    assert!((a * 1.0 + b * 2.0 - all * 3.0).abs() < 1e-12);

    // uniform random binary predictions are right about half the time
    let mut r = rng(17);
    let n = 20_000;
    let scores = Array2::from_shape_simple_fn((n, 2), || r.random::<f64>());
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
    let nodes: Vec<usize> = (0..n).collect();
    assert!((accuracy(&scores, &labels, &nodes).unwrap() - 0.5).abs() < 0.05);
}
