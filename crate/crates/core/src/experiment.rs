//! Multi-seed experiments: per run, draw a split, corrupt the features once,
//! train every requested model on that same instance, and aggregate test
//! accuracy into a [`ResultTable`].

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrupt::{
    corrupt_features, fill, make_missing, CorruptionSpec, ElementMask, FillStrategy, MissingData,
    MissingMask, NodeMask, Regime,
};
use crate::data::{
    load_dataset, make_splits, synth_communities, Dataset, Split, SplitSpec, SynthSpec,
};
use crate::error::{Error, Result};
use crate::graph::{build_normalized_adjacency, build_renormalized_adjacency, NormalizedOperator};
use crate::nn::{train, EpochRecord, HiddenPropagatorKind, InputPropagator, Model, TrainConfig};
use crate::propagate::{FistaConfig, MaskConfig};

pub const RESULTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "gden-nlap")]
    GdenNlap,
    #[serde(rename = "robustgcn-n")]
    RobustN,
    #[serde(rename = "robustgcn-m1")]
    RobustM1,
    #[serde(rename = "robustgcn-m2a")]
    RobustM2a,
    #[serde(rename = "robustgcn-m2e")]
    RobustM2e,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Gcn,
        ModelKind::GdenNlap,
        ModelKind::RobustN,
        ModelKind::RobustM1,
        ModelKind::RobustM2a,
        ModelKind::RobustM2e,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::GdenNlap => "gden-nlap",
            ModelKind::RobustN => "robustgcn-n",
            ModelKind::RobustM1 => "robustgcn-m1",
            ModelKind::RobustM2a => "robustgcn-m2a",
            ModelKind::RobustM2e => "robustgcn-m2e",
        }
    }

    /// Consumes the raw missing-value mask rather than filled features.
    pub fn uses_mask(self) -> bool {
        matches!(
            self,
            ModelKind::RobustM1 | ModelKind::RobustM2a | ModelKind::RobustM2e
        )
    }

    pub fn needs_node_mask(self) -> bool {
        matches!(self, ModelKind::RobustM2a | ModelKind::RobustM2e)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let key = key.strip_prefix("robustgcn-").map_or(key.as_str(), |k| k);
        Ok(match key {
            "gcn" => ModelKind::Gcn,
            "gden-nlap" | "gden" => ModelKind::GdenNlap,
            "n" => ModelKind::RobustN,
            "m1" => ModelKind::RobustM1,
            "m2a" => ModelKind::RobustM2a,
            "m2e" => ModelKind::RobustM2e,
            _ => return Err(Error::Config(format!("unknown model `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Bundle(PathBuf),
    Synthetic(SynthSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Bundle(path) => load_dataset(path),
            DataSource::Synthetic(spec) => synth_communities(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub regime: Regime,
    pub level: f64,
}

/// Propagator hyperparameters. Grids with more than one value are searched
/// per run and the candidate with the lowest validation loss is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    pub n_alpha: Vec<f64>,
    pub n_epsilon: Vec<f64>,
    pub fista_max_iterations: usize,
    /// Run unrolled FISTA in the hidden layer too, instead of the quadratic propagator.
    pub n_both_layers: bool,
    pub unroll_iterations: usize,
    pub mask_alpha: Vec<f64>,
    pub m1_steps: usize,
    pub m2_steps: usize,
    pub gden_alpha: Vec<f64>,
    /// Use `A + I` before normalizing. `None` enables it for GCN only.
    pub renormalize: Option<bool>,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            n_alpha: vec![10.0],
            n_epsilon: vec![1e-3],
            fista_max_iterations: 1000,
            n_both_layers: false,
            unroll_iterations: 10,
            mask_alpha: vec![1.8],
            m1_steps: 10,
            m2_steps: 5,
            gden_alpha: vec![1.8],
            renormalize: None,
        }
    }
}

impl PropagationSettings {
    pub fn renormalized(&self, model: ModelKind) -> bool {
        self.renormalize.unwrap_or(model == ModelKind::Gcn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub models: Vec<ModelKind>,
    pub corruption: Option<Corruption>,
    /// Filling used to feed non-mask models on missing data.
    pub fill: FillStrategy,
    /// Starting point of the mask iterations at missing entries.
    pub mask_init_fill: FillStrategy,
    pub propagation: PropagationSettings,
    pub train: TrainConfig,
    /// The split seed is replaced by a per-run seed.
    pub split: SplitSpec,
    pub runs: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Synthetic(SynthSpec::default()),
            models: vec![ModelKind::Gcn],
            corruption: None,
            fill: FillStrategy::Nmf,
            mask_init_fill: FillStrategy::Nmf,
            propagation: PropagationSettings::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            runs: 10,
            seed: 0,
        }
    }
}

fn check_grid(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Config(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Checks parameters and model/corruption compatibility without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be ≥ 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::Config("a model is listed twice".into()));
        }
        let p = &self.propagation;
        check_grid("alpha (robustgcn-n)", &p.n_alpha)?;
        check_grid("epsilon", &p.n_epsilon)?;
        check_grid("alpha (mask models)", &p.mask_alpha)?;
        check_grid("alpha (gden-nlap)", &p.gden_alpha)?;
        if p.fista_max_iterations == 0
            || p.unroll_iterations == 0
            || p.m1_steps == 0
            || p.m2_steps == 0
        {
            return Err(Error::Config("iteration counts must be ≥ 1".into()));
        }
        if let Some(c) = &self.corruption {
            if !(0.0..=1.0).contains(&c.level) {
                return Err(Error::Config(format!(
                    "corruption level {} outside [0, 1]",
                    c.level
                )));
            }
        }
        let regime = self.corruption.map(|c| c.regime);
        for &m in &self.models {
            if m.uses_mask() && !regime.is_some_and(Regime::is_missing) {
                return Err(Error::Config(format!(
                    "{m} needs a missing-value regime (--missing)"
                )));
            }
            if m.needs_node_mask() && regime != Some(Regime::MissingNodes) {
                return Err(Error::Config(format!(
                    "{m} needs node-level missingness (--missing nodes)"
                )));
            }
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON encoding of the whole configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// SplitMix64 finalizer; derives independent seeds per run and purpose.
fn derive_seed(base: u64, run: usize, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add((run as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed69));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub split: u64,
    pub corruption: u64,
    pub train: u64,
}

impl RunSeeds {
    pub fn for_run(seed: u64, run: usize) -> Self {
        RunSeeds {
            split: derive_seed(seed, run, 1),
            corruption: derive_seed(seed, run, 2),
            train: derive_seed(seed, run, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub model: ModelKind,
    pub seeds: RunSeeds,
    pub test_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub error: Option<String>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: ModelKind,
    /// Mean and population standard deviation of test accuracy over completed runs.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub completed: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub edges: usize,
    pub metadata: BTreeMap<String, String>,
}

impl DatasetSummary {
    fn of(ds: &Dataset) -> Self {
        DatasetSummary {
            name: ds.name.clone(),
            n: ds.n(),
            d: ds.d(),
            classes: ds.classes,
            edges: ds.graph.edge_count(),
            metadata: ds.metadata.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub format_version: u32,
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub cells: Vec<Cell>,
    pub runs: Vec<RunRecord>,
}

impl ResultTable {
    pub fn cell(&self, model: ModelKind) -> Option<&Cell> {
        self.cells.iter().find(|c| c.model == model)
    }

    pub fn error_count(&self) -> usize {
        self.cells.iter().map(|c| c.errors).sum()
    }

    /// Test accuracies of completed runs of one model, in run order.
    pub fn accuracies(&self, model: ModelKind) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.model == model)
            .filter_map(|r| r.test_acc)
            .collect()
    }

    fn aggregate(config: ExperimentConfig, dataset: DatasetSummary, runs: Vec<RunRecord>) -> Self {
        let cells = config
            .models
            .iter()
            .map(|&model| {
                let accs: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.model == model)
                    .filter_map(|r| r.test_acc)
                    .collect();
                let errors = runs
                    .iter()
                    .filter(|r| r.model == model && r.error.is_some())
                    .count();
                let (mean, std) = if accs.is_empty() {
                    (None, None)
                } else {
                    let k = accs.len() as f64;
                    let mean = accs.iter().sum::<f64>() / k;
                    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / k;
                    (Some(mean), Some(var.sqrt()))
                };
                Cell {
                    model,
                    mean,
                    std,
                    completed: accs.len(),
                    errors,
                }
            })
            .collect();
        ResultTable {
            format_version: RESULTS_FORMAT_VERSION,
            fingerprint: config.fingerprint(),
            config,
            dataset,
            cells,
            runs,
        }
    }
}

/// Normalized operators shared by every run.
struct Operators {
    plain: NormalizedOperator,
    renormalized: Option<NormalizedOperator>,
    /// `‖I − S‖₂` per operator, needed for FISTA step sizes.
    plain_norm: Option<f64>,
    renormalized_norm: Option<f64>,
}

impl Operators {
    fn build(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let p = &cfg.propagation;
        let plain = build_normalized_adjacency(&ds.graph)?;
        let renormalized = if cfg.models.iter().any(|&m| p.renormalized(m)) {
            Some(build_renormalized_adjacency(&ds.graph)?)
        } else {
            None
        };
        let fista = cfg.models.contains(&ModelKind::RobustN);
        let renorm_n = p.renormalized(ModelKind::RobustN);
        let plain_norm = if fista && !renorm_n {
            Some(plain.laplacian_norm()?)
        } else {
            None
        };
        let renormalized_norm = match (&renormalized, fista && renorm_n) {
            (Some(op), true) => Some(op.laplacian_norm()?),
            _ => None,
        };
        Ok(Operators {
            plain,
            renormalized,
            plain_norm,
            renormalized_norm,
        })
    }

    fn for_model(
        &self,
        model: ModelKind,
        p: &PropagationSettings,
    ) -> (&NormalizedOperator, Option<f64>) {
        if p.renormalized(model) {
            (
                self.renormalized.as_ref().expect("built when needed"),
                self.renormalized_norm,
            )
        } else {
            (&self.plain, self.plain_norm)
        }
    }
}

/// One corrupted instance, shared by all models of a run.
enum Instance {
    Values(Array2<f64>),
    Missing {
        filled: Array2<f64>,
        mask_init: Array2<f64>,
        mask: MissingMask,
    },
}

struct Candidate {
    input: InputPropagator,
    hidden: HiddenPropagatorKind,
    alpha: Option<f64>,
    epsilon: Option<f64>,
}

fn candidates(
    model: ModelKind,
    p: &PropagationSettings,
    norm: Option<f64>,
    inst: &Instance,
) -> Result<Vec<Candidate>> {
    let masks = match inst {
        Instance::Missing { mask, .. } => Some(mask),
        Instance::Values(_) => None,
    };
    let element_mask = |d: usize| -> Result<ElementMask> {
        masks
            .map(|m| m.to_element_mask(d))
            .ok_or(Error::MissingMask("robustgcn-m1"))
    };
    let node_mask = || -> Result<NodeMask> {
        match masks {
            Some(MissingMask::Nodes(t)) => Ok(t.clone()),
            _ => Err(Error::MissingMask("robustgcn-m2")),
        }
    };
    let d = match inst {
        Instance::Values(h) => h.ncols(),
        Instance::Missing { filled, .. } => filled.ncols(),
    };
    let mut out = Vec::new();
    match model {
        ModelKind::Gcn => out.push(Candidate {
            input: InputPropagator::OneStep,
            hidden: HiddenPropagatorKind::OneStep,
            alpha: None,
            epsilon: None,
        }),
        ModelKind::GdenNlap => {
            for &alpha in &p.gden_alpha {
                out.push(Candidate {
                    input: InputPropagator::Gden { alpha },
                    hidden: HiddenPropagatorKind::Gden { alpha },
                    alpha: Some(alpha),
                    epsilon: None,
                });
            }
        }
        ModelKind::RobustN => {
            let norm = norm.expect("computed when robustgcn-n is selected");
            for &alpha in &p.n_alpha {
                for &epsilon in &p.n_epsilon {
                    let hidden = if p.n_both_layers {
                        HiddenPropagatorKind::FistaUnrolled {
                            alpha,
                            iterations: p.unroll_iterations,
                        }
                    } else {
                        HiddenPropagatorKind::Gden { alpha }
                    };
                    out.push(Candidate {
                        input: InputPropagator::L1(FistaConfig {
                            alpha,
                            epsilon,
                            max_iterations: p.fista_max_iterations,
                            step_size: Some(2.0 * alpha * norm),
                        }),
                        hidden,
                        alpha: Some(alpha),
                        epsilon: Some(epsilon),
                    });
                }
            }
        }
        ModelKind::RobustM1 | ModelKind::RobustM2a | ModelKind::RobustM2e => {
            for &alpha in &p.mask_alpha {
                let input = match model {
                    ModelKind::RobustM1 => InputPropagator::MaskM1 {
                        config: MaskConfig {
                            alpha,
                            steps: p.m1_steps,
                        },
                        mask: element_mask(d)?,
                    },
                    ModelKind::RobustM2a => InputPropagator::MaskM2Iterate {
                        config: MaskConfig {
                            alpha,
                            steps: p.m2_steps,
                        },
                        mask: node_mask()?,
                    },
                    _ => InputPropagator::MaskM2Exact {
                        alpha,
                        mask: node_mask()?,
                    },
                };
                out.push(Candidate {
                    input,
                    hidden: HiddenPropagatorKind::Gden { alpha },
                    alpha: Some(alpha),
                    epsilon: None,
                });
            }
        }
    }
    Ok(out)
}

struct Fitted {
    test_acc: f64,
    val_acc: f64,
    val_loss: f64,
    best_epoch: usize,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    history: Vec<EpochRecord>,
}

fn fit_model(
    ds: &Dataset,
    ops: &Operators,
    cfg: &ExperimentConfig,
    model: ModelKind,
    split: &Split,
    inst: &Instance,
    train_seed: u64,
) -> Result<Fitted> {
    let p = &cfg.propagation;
    let (s, norm) = ops.for_model(model, p);
    let features = match inst {
        Instance::Values(h) => h,
        Instance::Missing { mask_init, .. } if model.uses_mask() => mask_init,
        Instance::Missing { filled, .. } => filled,
    };
    let train_cfg = TrainConfig {
        seed: train_seed,
        ..cfg.train
    };
    let mut best: Option<Fitted> = None;
    for cand in candidates(model, p, norm, inst)? {
        let net = Model::prepare(
            &ds.graph,
            s,
            features.view(),
            &cand.input,
            cand.hidden,
            ds.classes,
        )?;
        let outcome = train(&net, &ds.labels, split, &train_cfg)?;
        if best
            .as_ref()
            .is_some_and(|b| b.val_loss <= outcome.best_val_loss)
        {
            continue;
        }
        best = Some(Fitted {
            test_acc: net.evaluate(&outcome.params, &ds.labels, &split.test)?,
            val_acc: net.evaluate(&outcome.params, &ds.labels, &split.val)?,
            val_loss: outcome.best_val_loss,
            best_epoch: outcome.best_epoch,
            alpha: cand.alpha,
            epsilon: cand.epsilon,
            history: outcome.history,
        });
    }
    Ok(best.expect("candidate grids are non-empty"))
}

fn make_instance(ds: &Dataset, cfg: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let Some(c) = cfg.corruption else {
        return Ok(Instance::Values(ds.features.clone()));
    };
    let spec = CorruptionSpec::new(c.regime, c.level, seed)?;
    if !c.regime.is_missing() {
        return Ok(Instance::Values(corrupt_features(&ds.features, &spec)?));
    }
    let MissingData { features, mask, .. } = make_missing(&ds.features, &spec)?;
    let em = mask.to_element_mask(ds.d());
    let filled = fill(&features, &em, cfg.fill, &ds.graph)?;
    let mask_init = if cfg.mask_init_fill == cfg.fill {
        filled.clone()
    } else {
        fill(&features, &em, cfg.mask_init_fill, &ds.graph)?
    };
    Ok(Instance::Missing {
        filled,
        mask_init,
        mask,
    })
}

fn execute_run(
    ds: &Dataset,
    ops: &Operators,
    cfg: &ExperimentConfig,
    run: usize,
) -> Vec<RunRecord> {
    let seeds = RunSeeds::for_run(cfg.seed, run);
    let blank = |model| RunRecord {
        run,
        model,
        seeds,
        test_acc: None,
        val_acc: None,
        val_loss: None,
        best_epoch: None,
        alpha: None,
        epsilon: None,
        error: None,
        history: Vec::new(),
    };
    let shared = make_splits(
        ds,
        &SplitSpec {
            seed: seeds.split,
            ..cfg.split
        },
    )
    .and_then(|split| Ok((make_instance(ds, cfg, seeds.corruption)?, split)));
    let (inst, split) = match shared {
        Ok(v) => v,
        Err(e) => {
            log::warn!("run {run}: {e}");
            return cfg
                .models
                .iter()
                .map(|&m| RunRecord {
                    error: Some(e.to_string()),
                    ..blank(m)
                })
                .collect();
        }
    };
    cfg.models
        .iter()
        .map(
            |&model| match fit_model(ds, ops, cfg, model, &split, &inst, seeds.train) {
                Ok(f) => {
                    log::info!("run {run} {model}: test accuracy {:.4}", f.test_acc);
                    RunRecord {
                        test_acc: Some(f.test_acc),
                        val_acc: Some(f.val_acc),
                        val_loss: Some(f.val_loss),
                        best_epoch: Some(f.best_epoch),
                        alpha: f.alpha,
                        epsilon: f.epsilon,
                        history: f.history,
                        ..blank(model)
                    }
                }
                Err(e) => {
                    log::warn!("run {run} {model}: {e}");
                    RunRecord {
                        error: Some(e.to_string()),
                        ..blank(model)
                    }
                }
            },
        )
        .collect()
}

fn map_runs<F>(runs: usize, f: F) -> Vec<Vec<RunRecord>>
where
    F: Fn(usize) -> Vec<RunRecord> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..runs).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..runs).map(f).collect()
    }
}

/// Loads the data and runs every model on `runs` paired instances.
///
/// Configuration problems, unreadable data, an infeasible split or a
/// corruption regime that does not fit the features are returned as errors.
/// Failures inside individual runs are recorded in the table instead.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let ds = cfg.data.load()?;
    run_on_dataset(cfg, &ds)
}

/// As [`run_experiment`], on an already loaded dataset.
pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ResultTable> {
    cfg.validate()?;
    ds.validate()?;
    // Surface deterministic per-run failures up front as configuration errors.
    let probe = RunSeeds::for_run(cfg.seed, 0);
    make_splits(
        ds,
        &SplitSpec {
            seed: probe.split,
            ..cfg.split
        },
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    if let Some(c) = cfg.corruption {
        if c.regime == Regime::BinaryFlip {
            corrupt_features(&ds.features, &CorruptionSpec::new(c.regime, 0.0, 0)?)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    let ops = Operators::build(ds, cfg)?;
    let runs = map_runs(cfg.runs, |run| execute_run(ds, &ops, cfg, run));
    Ok(ResultTable::aggregate(
        cfg.clone(),
        DatasetSummary::of(ds),
        runs.into_iter().flatten().collect(),
    ))
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v))
}

/// Aligned plain-text rendering, accuracies in percent.
pub fn format_table(table: &ResultTable) -> String {
    let cfg = &table.config;
    let ds = &table.dataset;
    let corruption = cfg.corruption.map_or_else(
        || "none".to_string(),
        |c| format!("{} {}", c.regime, c.level),
    );
    let mut out = String::new();
    writeln!(out, "# robustgcn results, format {}", table.format_version).unwrap();
    writeln!(out, "# fingerprint {}", table.fingerprint).unwrap();
    writeln!(
        out,
        "# dataset {} (n={}, d={}, classes={}, edges={})",
        ds.name, ds.n, ds.d, ds.classes, ds.edges
    )
    .unwrap();
    writeln!(
        out,
        "# corruption {corruption}, runs {}, seed {}",
        cfg.runs, cfg.seed
    )
    .unwrap();
    writeln!(
        out,
        "{:<16} {:>8} {:>8} {:>10} {:>7}",
        "model", "mean", "std", "completed", "errors"
    )
    .unwrap();
    for c in &table.cells {
        writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>10} {:>7}",
            c.model.name(),
            pct(c.mean),
            pct(c.std),
            c.completed,
            c.errors
        )
        .unwrap();
    }
    out
}

/// Writes `results.txt`, `results.json` and `curves/run{r}_{model}.jsonl` under `dir`.
pub fn emit_outputs(table: &ResultTable, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let curves = dir.join("curves");
    fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
    write_file(&dir.join("results.txt"), format_table(table).as_bytes())?;
    let mut json = serde_json::to_string_pretty(table).map_err(|e| Error::Serde(e.to_string()))?;
    json.push('\n');
    write_file(&dir.join("results.json"), json.as_bytes())?;
    for r in &table.runs {
        let path = curves.join(format!("run{}_{}.jsonl", r.run, r.model.name()));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        crate::nn::write_history(BufWriter::new(file), &r.history)
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads `results.json` from a directory (or the file itself).
pub fn load_results(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let file = if path.is_dir() {
        path.join("results.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let table: ResultTable =
        serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
    if table.format_version != RESULTS_FORMAT_VERSION {
        return Err(Error::Serde(format!(
            "results format {} is not supported (expected {RESULTS_FORMAT_VERSION})",
            table.format_version
        )));
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NoiseLevel,
    MissingLevel,
    Alpha,
    Epsilon,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::NoiseLevel => "noise_level",
            SweepAxis::MissingLevel => "missing_level",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Epsilon => "epsilon",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "noise_level" | "noise" => Ok(SweepAxis::NoiseLevel),
            "missing_level" | "missing" => Ok(SweepAxis::MissingLevel),
            "alpha" => Ok(SweepAxis::Alpha),
            "epsilon" => Ok(SweepAxis::Epsilon),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    /// Errors when the axis has no meaning for `cfg`.
    pub fn check(self, cfg: &ExperimentConfig) -> Result<()> {
        let regime = cfg.corruption.map(|c| c.regime);
        match self {
            SweepAxis::NoiseLevel if !regime.is_some_and(|r| !r.is_missing()) => Err(
                Error::Config("a noise_level sweep needs a noise regime (--noise)".into()),
            ),
            SweepAxis::MissingLevel if !regime.is_some_and(Regime::is_missing) => Err(
                Error::Config("a missing_level sweep needs a missing regime (--missing)".into()),
            ),
            SweepAxis::Epsilon if !cfg.models.contains(&ModelKind::RobustN) => Err(Error::Config(
                "an epsilon sweep needs robustgcn-n among the models".into(),
            )),
            SweepAxis::Alpha if cfg.models.iter().all(|&m| m == ModelKind::Gcn) => Err(
                Error::Config("an alpha sweep needs a model with an alpha parameter".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Copy of `cfg` with the axis set to `value`. An alpha value replaces
    /// every alpha grid.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        self.check(cfg)?;
        let mut out = cfg.clone();
        match self {
            SweepAxis::NoiseLevel | SweepAxis::MissingLevel => {
                if let Some(c) = out.corruption.as_mut() {
                    c.level = value;
                }
            }
            SweepAxis::Alpha => {
                let p = &mut out.propagation;
                p.n_alpha = vec![value];
                p.mask_alpha = vec![value];
                p.gden_alpha = vec![value];
            }
            SweepAxis::Epsilon => out.propagation.n_epsilon = vec![value],
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub table: Option<ResultTable>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Point failures plus failed runs inside completed points.
    pub fn error_count(&self) -> usize {
        self.points
            .iter()
            .map(|p| p.table.as_ref().map_or(1, ResultTable::error_count))
            .sum()
    }

    /// Long-format curve: one `value,model,mean,std` row per model and point.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("value,model,mean,std\n");
        for p in &self.points {
            let Some(t) = &p.table else { continue };
            for c in &t.cells {
                let f = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
                writeln!(out, "{},{},{},{}", p.value, c.model, f(c.mean), f(c.std)).unwrap();
            }
        }
        out
    }
}

/// One experiment per value. Point failures are recorded and the sweep goes on.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    axis.check(cfg)?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let ds = cfg.data.load()?;
    let points = values
        .iter()
        .map(|&value| {
            let outcome = axis.apply(cfg, value).and_then(|c| run_on_dataset(&c, &ds));
            match outcome {
                Ok(table) => SweepPoint {
                    value,
                    table: Some(table),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{axis} = {value}: {e}");
                    SweepPoint {
                        value,
                        table: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(SweepResult { axis, points })
}

/// Writes `curve.csv`, `sweep.json` and each point's outputs under `point{k}/`.
pub fn emit_sweep(result: &SweepResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("curve.csv"), result.curve_csv().as_bytes())?;
    let summary: Vec<(f64, Option<&str>, Option<String>)> = result
        .points
        .iter()
        .map(|p| {
            (
                p.value,
                p.table.as_ref().map(|t| t.fingerprint.as_str()),
                p.error.clone(),
            )
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "format_version": RESULTS_FORMAT_VERSION,
        "axis": result.axis,
        "points": summary,
    }))
    .map_err(|e| Error::Serde(e.to_string()))?;
    json.push('\n');
    write_file(&dir.join("sweep.json"), json.as_bytes())?;
    for (k, p) in result.points.iter().enumerate() {
        if let Some(t) = &p.table {
            emit_outputs(t, dir.join(format!("point{k}")))?;
        }
    }
    Ok(())
}
