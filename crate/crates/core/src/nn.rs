//! Two-layer graph convolutional network `softmax(G₂(ReLU(G₁(H)·W₁))·W₂)`
//! with hand-written reverse-mode gradients and Adam.
//!
//! The first-layer propagation `G₁(H)` acts on the raw features only, so it is
//! computed once in [`Model::prepare`] and never differentiated. The hidden
//! propagation `G₂` sees trainable activations and supplies a vector-Jacobian
//! product: `S` is symmetric, the GDEN solve is self-adjoint, and FISTA is
//! unrolled for a fixed number of iterations.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::corrupt::{ElementMask, NodeMask};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedOperator};
use crate::propagate::{
    dcrnn_diffusion, gc_onestep, robust_l1_fista, FistaConfig, FistaTape, GdenOperator, MaskConfig,
    MaskM2Operator, UnrolledFista,
};

pub const DEFAULT_HIDDEN_UNITS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w: Array2<f64>,
}

/// Entries i.i.d. uniform on `[−b, b]`, `b = √(6/(d_in + d_out))`.
pub fn glorot_init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> LayerWeights {
    assert!(d_in >= 1 && d_out >= 1, "layer dimensions must be positive");
    let bound = (6.0 / (d_in + d_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    LayerWeights {
        w: Array2::from_shape_simple_fn((d_in, d_out), || dist.sample(rng)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layer1: LayerWeights,
    pub layer2: LayerWeights,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        ModelParams {
            layer1: glorot_init(d, hidden, rng),
            layer2: glorot_init(hidden, classes, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layer1: LayerWeights {
                w: Array2::zeros(self.layer1.w.raw_dim()),
            },
            layer2: LayerWeights {
                w: Array2::zeros(self.layer2.w.raw_dim()),
            },
        }
    }

    pub fn weights(&self) -> [&Array2<f64>; 2] {
        [&self.layer1.w, &self.layer2.w]
    }

    pub fn weights_mut(&mut self) -> [&mut Array2<f64>; 2] {
        [&mut self.layer1.w, &mut self.layer2.w]
    }
}

/// First-layer propagation, applied to the raw features.
#[derive(Debug, Clone)]
pub enum InputPropagator {
    OneStep,
    Diffusion {
        steps: usize,
    },
    Gden {
        alpha: f64,
    },
    L1(FistaConfig),
    /// Element-mask fitting; features must be pre-filled at missing entries.
    MaskM1 {
        config: MaskConfig,
        mask: ElementMask,
    },
    /// Node-mask fitting by truncated iteration; features must be pre-filled.
    MaskM2Iterate {
        config: MaskConfig,
        mask: NodeMask,
    },
    MaskM2Exact {
        alpha: f64,
        mask: NodeMask,
    },
}

impl InputPropagator {
    pub fn propagate(
        &self,
        g: &Graph,
        s: &NormalizedOperator,
        h: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        use crate::propagate::{mask_m1_iterate, mask_m2_iterate};
        match self {
            InputPropagator::OneStep => gc_onestep(s, h),
            InputPropagator::Diffusion { steps } => dcrnn_diffusion(g, h, *steps),
            InputPropagator::Gden { alpha } => GdenOperator::from_alpha(s, *alpha)?.apply(h),
            InputPropagator::L1(cfg) => {
                let r = robust_l1_fista(s, h, cfg)?;
                log::debug!(
                    "fista: {} iterations, converged = {}, objective = {:.6}",
                    r.iterations_used,
                    r.converged,
                    r.final_objective
                );
                Ok(r.z)
            }
            InputPropagator::MaskM1 { config, mask } => Ok(mask_m1_iterate(s, h, mask, config)?.z),
            InputPropagator::MaskM2Iterate { config, mask } => {
                Ok(mask_m2_iterate(s, h, mask, config)?.z)
            }
            InputPropagator::MaskM2Exact { alpha, mask } => {
                MaskM2Operator::new(s, mask, *alpha)?.apply(h)
            }
        }
    }
}

/// Hidden-layer propagation choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HiddenPropagatorKind {
    OneStep,
    Gden { alpha: f64 },
    FistaUnrolled { alpha: f64, iterations: usize },
}

#[derive(Debug, Clone)]
enum HiddenPropagator {
    OneStep,
    Gden(GdenOperator),
    Fista(UnrolledFista),
}

#[derive(Debug, Clone)]
enum HiddenTape {
    None,
    Fista(FistaTape),
}

impl HiddenPropagator {
    fn build(kind: HiddenPropagatorKind, s: &NormalizedOperator) -> Result<Self> {
        Ok(match kind {
            HiddenPropagatorKind::OneStep => HiddenPropagator::OneStep,
            HiddenPropagatorKind::Gden { alpha } => {
                HiddenPropagator::Gden(GdenOperator::from_alpha(s, alpha)?)
            }
            HiddenPropagatorKind::FistaUnrolled { alpha, iterations } => {
                HiddenPropagator::Fista(UnrolledFista::new(s, alpha, iterations, None)?)
            }
        })
    }

    fn forward(
        &self,
        s: &NormalizedOperator,
        x: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, HiddenTape)> {
        match self {
            HiddenPropagator::OneStep => Ok((s.apply(x), HiddenTape::None)),
            HiddenPropagator::Gden(op) => Ok((op.apply(x)?, HiddenTape::None)),
            HiddenPropagator::Fista(f) => {
                let (z, tape) = f.forward(s, x)?;
                Ok((z, HiddenTape::Fista(tape)))
            }
        }
    }

    fn backward(
        &self,
        s: &NormalizedOperator,
        tape: &HiddenTape,
        g: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        match (self, tape) {
            (HiddenPropagator::OneStep, _) => Ok(s.apply(g)),
            (HiddenPropagator::Gden(op), _) => op.apply(g),
            (HiddenPropagator::Fista(f), HiddenTape::Fista(t)) => Ok(f.backward(s, t, g)),
            (HiddenPropagator::Fista(_), HiddenTape::None) => {
                unreachable!("fista forward always records a tape")
            }
        }
    }
}

/// A network bound to one graph and one set of input features.
#[derive(Debug, Clone)]
pub struct Model {
    s: NormalizedOperator,
    input: Array2<f64>,
    hidden: HiddenPropagator,
    classes: usize,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    propagated: Array2<f64>,
    tape: HiddenTape,
    hidden_keep: Option<Array2<f64>>,
}

impl ForwardCache {
    /// Smallest `|pre-activation|` of the ReLU layer.
    pub fn relu_margin(&self) -> f64 {
        self.pre_activation
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Distance to the nearest soft-threshold kink of an unrolled FISTA layer.
    pub fn threshold_margin(&self) -> f64 {
        match &self.tape {
            HiddenTape::Fista(t) => t.kink_margin,
            HiddenTape::None => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub weight_decay: f64,
    /// Decay only the first layer's weights.
    pub first_layer_only: bool,
}

impl Regularization {
    pub fn none() -> Self {
        Regularization {
            weight_decay: 0.0,
            first_layer_only: false,
        }
    }

    fn penalty(&self, params: &ModelParams) -> f64 {
        let sq = |w: &Array2<f64>| w.iter().map(|v| v * v).sum::<f64>();
        let mut total = sq(&params.layer1.w);
        if !self.first_layer_only {
            total += sq(&params.layer2.w);
        }
        0.5 * self.weight_decay * total
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Mean negative log-likelihood over `nodes`, computed from logits for stability.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    let total: f64 = nodes
        .iter()
        .map(|&i| {
            let row = logits.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[labels[i]]
        })
        .sum();
    total / nodes.len() as f64
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn dropout_keep(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scale = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            scale
        }
    })
}

impl Model {
    /// Runs the input propagation once and prepares the hidden propagator.
    pub fn prepare(
        g: &Graph,
        s: &NormalizedOperator,
        features: ArrayView2<f64>,
        input: &InputPropagator,
        hidden: HiddenPropagatorKind,
        classes: usize,
    ) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "input features must be finite (fill missing entries first)".into(),
            ));
        }
        let z1 = input.propagate(g, s, features)?;
        Model::from_propagated(s, z1, hidden, classes)
    }

    /// Builds a model around already propagated input features.
    pub fn from_propagated(
        s: &NormalizedOperator,
        input: Array2<f64>,
        hidden: HiddenPropagatorKind,
        classes: usize,
    ) -> Result<Self> {
        if input.nrows() != s.n() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} rows, graph has {} nodes",
                input.nrows(),
                s.n()
            )));
        }
        if classes < 1 {
            return Err(Error::InvalidParameter("need at least one class".into()));
        }
        Ok(Model {
            hidden: HiddenPropagator::build(hidden, s)?,
            s: s.clone(),
            input,
            classes,
        })
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.input
    }

    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn n(&self) -> usize {
        self.input.nrows()
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        let (d1, h1) = params.layer1.w.dim();
        let (h2, c) = params.layer2.w.dim();
        if d1 != self.input_dim() || h1 != h2 || c != self.classes {
            return Err(Error::DimensionMismatch(format!(
                "weights {:?} / {:?} do not fit input dim {} and {} classes",
                params.layer1.w.dim(),
                params.layer2.w.dim(),
                self.input_dim(),
                self.classes
            )));
        }
        Ok(())
    }

    /// Deterministic forward pass.
    pub fn forward(&self, params: &ModelParams) -> Result<ForwardCache> {
        self.forward_with_dropout(params, 0.0, None)
    }

    fn forward_with_dropout(
        &self,
        params: &ModelParams,
        rate: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache> {
        self.check_params(params)?;
        let (input, rng) = match (rate > 0.0, rng) {
            (true, Some(rng)) => {
                let keep = dropout_keep(self.input.dim(), rate, rng);
                (&self.input * &keep, Some(rng))
            }
            _ => (self.input.clone(), None),
        };
        let pre_activation = input.dot(&params.layer1.w);
        let hidden = pre_activation.mapv(|v| v.max(0.0));
        let (hidden_in, hidden_keep) = match rng {
            Some(rng) => {
                let keep = dropout_keep(hidden.dim(), rate, rng);
                (&hidden * &keep, Some(keep))
            }
            None => (hidden, None),
        };
        let (propagated, tape) = self.hidden.forward(&self.s, hidden_in.view())?;
        let logits = propagated.dot(&params.layer2.w);
        let probs = softmax_rows(&logits);
        Ok(ForwardCache {
            logits,
            probs,
            input,
            pre_activation,
            propagated,
            tape,
            hidden_keep,
        })
    }

    /// Training loss (cross-entropy over `train` plus weight decay).
    pub fn loss(
        &self,
        params: &ModelParams,
        labels: &[usize],
        train: &[usize],
        reg: &Regularization,
    ) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Empty("label set"));
        }
        let cache = self.forward(params)?;
        Ok(cross_entropy(&cache.logits, labels, train) + reg.penalty(params))
    }

    /// Loss and its gradient with respect to both weight matrices.
    pub fn loss_and_grad(
        &self,
        params: &ModelParams,
        labels: &[usize],
        train: &[usize],
        reg: &Regularization,
    ) -> Result<(f64, ModelParams)> {
        let cache = self.forward(params)?;
        self.backward(params, &cache, labels, train, reg)
    }

    fn backward(
        &self,
        params: &ModelParams,
        cache: &ForwardCache,
        labels: &[usize],
        train: &[usize],
        reg: &Regularization,
    ) -> Result<(f64, ModelParams)> {
        if train.is_empty() {
            return Err(Error::Empty("label set"));
        }
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n()
            )));
        }
        let loss = cross_entropy(&cache.logits, labels, train) + reg.penalty(params);

        let scale = 1.0 / train.len() as f64;
        let mut g_logits = Array2::<f64>::zeros(cache.logits.raw_dim());
        for &i in train {
            let mut row = g_logits.row_mut(i);
            row.assign(&cache.probs.row(i));
            row[labels[i]] -= 1.0;
            row *= scale;
        }

        let mut g_w2 = cache.propagated.t().dot(&g_logits);
        let g_prop = g_logits.dot(&params.layer2.w.t());
        let mut g_hidden = self.hidden.backward(&self.s, &cache.tape, g_prop.view())?;
        if let Some(keep) = &cache.hidden_keep {
            g_hidden *= keep;
        }
        Zip::from(&mut g_hidden)
            .and(&cache.pre_activation)
            .for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
        let mut g_w1 = cache.input.t().dot(&g_hidden);

        if reg.weight_decay != 0.0 {
            g_w1.scaled_add(reg.weight_decay, &params.layer1.w);
            if !reg.first_layer_only {
                g_w2.scaled_add(reg.weight_decay, &params.layer2.w);
            }
        }
        Ok((
            loss,
            ModelParams {
                layer1: LayerWeights { w: g_w1 },
                layer2: LayerWeights { w: g_w2 },
            },
        ))
    }

    /// Fraction of `nodes` whose argmax prediction equals the label.
    pub fn evaluate(&self, params: &ModelParams, labels: &[usize], nodes: &[usize]) -> Result<f64> {
        let cache = self.forward(params)?;
        accuracy(&cache.probs, labels, nodes)
    }
}

pub fn accuracy(scores: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation mask"));
    }
    let correct = nodes
        .iter()
        .filter(|&&i| argmax(scores.row(i)) == labels[i])
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.005,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: ModelParams,
    second: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        AdamState {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is expected inside `grads`.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &ModelParams) {
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
        ..
    } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    let firsts = state.first.weights_mut();
    let seconds = state.second.weights_mut();
    for (((w, g), m), v) in params
        .weights_mut()
        .into_iter()
        .zip(grads.weights())
        .zip(firsts)
        .zip(seconds)
    {
        Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub hidden_units: usize,
    pub adam: AdamConfig,
    pub dropout: f64,
    pub decay_first_layer_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 10_000,
            patience: 100,
            seed: 0,
            hidden_units: DEFAULT_HIDDEN_UNITS,
            adam: AdamConfig::default(),
            dropout: 0.0,
            decay_first_layer_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::InvalidParameter("patience must be ≥ 1".into()));
        }
        if self.max_epochs == 0 || self.hidden_units == 0 {
            return Err(Error::InvalidParameter(
                "max_epochs and hidden_units must be ≥ 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            weight_decay: self.adam.weight_decay,
            first_layer_only: self.decay_first_layer_only,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Full-batch training with early stopping on validation loss.
///
/// Each epoch evaluates the current weights, records them if the validation
/// loss improved, then takes one Adam step. Training stops after `patience`
/// consecutive epochs without improvement; the weights of the best epoch are
/// returned.
pub fn train(
    model: &Model,
    labels: &[usize],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    split.check_disjoint()?;
    if split.train.is_empty() {
        return Err(Error::Empty("label set"));
    }
    if split.val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(
        model.input_dim(),
        cfg.hidden_units,
        model.classes(),
        &mut rng,
    );
    let mut adam = AdamState::new(cfg.adam, &params);
    let reg = cfg.regularization();

    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stale = 0;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let (loss, grads, eval) = if cfg.dropout > 0.0 {
            let noisy = model.forward_with_dropout(&params, cfg.dropout, Some(&mut rng))?;
            let (loss, grads) = model.backward(&params, &noisy, labels, &split.train, &reg)?;
            (loss, grads, model.forward(&params)?)
        } else {
            let cache = model.forward(&params)?;
            let (loss, grads) = model.backward(&params, &cache, labels, &split.train, &reg)?;
            (loss, grads, cache)
        };
        let val_loss = cross_entropy(&eval.logits, labels, &split.val);
        if !loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_loss,
            val_acc: accuracy(&eval.probs, labels, &split.val)?,
            train_acc: accuracy(&eval.probs, labels, &split.train)?,
        });

        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        adam_step(&mut adam, &mut params, &grads);
    }
    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        params,
        best_epoch,
        best_val_loss,
        history,
    })
}

/// Writes one JSON object per epoch.
pub fn write_history<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    for rec in history {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_history<R: BufRead>(r: R) -> Result<Vec<EpochRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| Error::Serde(e.to_string()))?;
            serde_json::from_str(&l).map_err(|e| Error::Serde(e.to_string()))
        })
        .collect()
}

/// Mean of the per-entry variance, exposed for initialisation checks.
pub fn empirical_variance(w: &Array2<f64>) -> f64 {
    let n = w.len() as f64;
    let mean = w.sum() / n;
    w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
