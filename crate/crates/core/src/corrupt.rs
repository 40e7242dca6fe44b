//! Feature corruption, missing-value masks, and the ZF / MF / NMF filling
//! strategies handed to models that need complete inputs.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-entry observation flags; `false` marks a missing entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementMask(Array2<bool>);

impl ElementMask {
    pub fn new(observed: Array2<bool>) -> Self {
        ElementMask(observed)
    }

    pub fn all_observed(n: usize, d: usize) -> Self {
        ElementMask(Array2::from_elem((n, d), true))
    }

    pub fn observed(&self) -> &Array2<bool> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.0[[i, j]]
    }

    pub fn missing_count(&self) -> usize {
        self.0.iter().filter(|&&b| !b).count()
    }

    /// The mask as a 0/1 matrix.
    pub fn to_f64(&self) -> Array2<f64> {
        self.0.mapv(|b| if b { 1.0 } else { 0.0 })
    }
}

/// Per-node observation flags; `false` marks a node whose whole feature row is missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask(Vec<bool>);

impl NodeMask {
    pub fn new(observed: Vec<bool>) -> Self {
        NodeMask(observed)
    }

    pub fn all_observed(n: usize) -> Self {
        NodeMask(vec![true; n])
    }

    pub fn observed(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.0.iter().filter(|&&b| !b).count()
    }

    /// τ as a 0/1 vector.
    pub fn to_f64(&self) -> Array1<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Expands to an element mask with whole rows missing.
    pub fn to_element_mask(&self, d: usize) -> ElementMask {
        ElementMask(Array2::from_shape_fn((self.0.len(), d), |(i, _)| self.0[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MissingMask {
    Elements(ElementMask),
    Nodes(NodeMask),
}

impl MissingMask {
    pub fn to_element_mask(&self, d: usize) -> ElementMask {
        match self {
            MissingMask::Elements(m) => m.clone(),
            MissingMask::Nodes(t) => t.to_element_mask(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Selected entries are reset by a fair coin over {0, 1}.
    BinaryFlip,
    /// Selected entries are redrawn uniformly over the column's observed range.
    RandomValue,
    MissingElements,
    MissingNodes,
}

impl Regime {
    pub fn is_missing(self) -> bool {
        matches!(self, Regime::MissingElements | Regime::MissingNodes)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::BinaryFlip => "binary_flip",
            Regime::RandomValue => "random_value",
            Regime::MissingElements => "missing_elements",
            Regime::MissingNodes => "missing_nodes",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub regime: Regime,
    pub level: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(regime: Regime, level: f64, seed: u64) -> Result<Self> {
        let spec = CorruptionSpec {
            regime,
            level,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.level) {
            return Err(Error::InvalidParameter(format!(
                "corruption level {} outside [0, 1]",
                self.level
            )));
        }
        Ok(())
    }

    /// `⌊level · total⌋`, robust to representation error in `level`.
    fn count(&self, total: usize) -> usize {
        let exact = self.level * total as f64;
        let rounded = exact.round();
        let k = if (exact - rounded).abs() < 1e-9 * (total as f64).max(1.0) {
            rounded
        } else {
            exact.floor()
        };
        (k as usize).min(total)
    }
}

/// Overwrites exactly `⌊p_c · n · d⌋` entries chosen without replacement.
pub fn corrupt_features(h: &Array2<f64>, spec: &CorruptionSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let (n, d) = h.dim();
    let k = spec.count(n * d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = h.clone();
    match spec.regime {
        Regime::BinaryFlip => {
            if h.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidParameter(
                    "binary_flip requires 0/1 features; use random_value".into(),
                ));
            }
            for idx in sample(&mut rng, n * d, k).into_iter() {
                out[[idx / d, idx % d]] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            }
        }
        Regime::RandomValue => {
            let ranges: Vec<(f64, f64)> = h
                .columns()
                .into_iter()
                .map(|c| {
                    c.iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                            (lo.min(v), hi.max(v))
                        })
                })
                .collect();
            for idx in sample(&mut rng, n * d, k).into_iter() {
                let (lo, hi) = ranges[idx % d];
                out[[idx / d, idx % d]] = if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                };
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "regime {other} does not corrupt values; use make_missing"
            )))
        }
    }
    Ok(out)
}

/// Features with missing entries set to NaN, the mask, and the held-out truth.
#[derive(Debug, Clone)]
pub struct MissingData {
    pub features: Array2<f64>,
    pub mask: MissingMask,
    pub truth: Array2<f64>,
}

/// Marks exactly `⌊p_m · n · d⌋` entries or `⌊p_m · n⌋` rows as missing.
pub fn make_missing(h: &Array2<f64>, spec: &CorruptionSpec) -> Result<MissingData> {
    spec.validate()?;
    let (n, d) = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = h.clone();
    let mask = match spec.regime {
        Regime::MissingElements => {
            let mut observed = Array2::from_elem((n, d), true);
            for idx in sample(&mut rng, n * d, spec.count(n * d)).into_iter() {
                observed[[idx / d, idx % d]] = false;
                features[[idx / d, idx % d]] = f64::NAN;
            }
            MissingMask::Elements(ElementMask(observed))
        }
        Regime::MissingNodes => {
            let mut observed = vec![true; n];
            for i in sample(&mut rng, n, spec.count(n)).into_iter() {
                observed[i] = false;
                features.row_mut(i).fill(f64::NAN);
            }
            MissingMask::Nodes(NodeMask(observed))
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "regime {other} does not remove values; use corrupt_features"
            )))
        }
    };
    Ok(MissingData {
        features,
        mask,
        truth: h.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillStrategy {
    /// Zero filling.
    Zf,
    /// Global mean of all known entries.
    Mf,
    /// Per-column mean over graph neighbours with the entry known, else the global mean.
    Nmf,
}

impl FromStr for FillStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zf" => Ok(FillStrategy::Zf),
            "mf" => Ok(FillStrategy::Mf),
            "nmf" => Ok(FillStrategy::Nmf),
            other => Err(Error::Config(format!("unknown fill strategy `{other}`"))),
        }
    }
}

impl fmt::Display for FillStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillStrategy::Zf => "zf",
            FillStrategy::Mf => "mf",
            FillStrategy::Nmf => "nmf",
        })
    }
}

/// Replaces every missing entry; known entries are copied unchanged.
pub fn fill(
    h: &Array2<f64>,
    mask: &ElementMask,
    strategy: FillStrategy,
    g: &Graph,
) -> Result<Array2<f64>> {
    let (n, d) = h.dim();
    if mask.shape() != (n, d) {
        return Err(Error::DimensionMismatch(format!(
            "mask is {:?}, features are {:?}",
            mask.shape(),
            (n, d)
        )));
    }
    if strategy == FillStrategy::Nmf && g.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, features have {n} rows",
            g.n()
        )));
    }
    let observed = mask.observed();
    let global_mean = || -> Result<f64> {
        let (sum, count) = h
            .iter()
            .zip(observed.iter())
            .filter(|(_, &o)| o)
            .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
        if count == 0 {
            Err(Error::NoKnownEntries)
        } else {
            Ok(sum / count as f64)
        }
    };

    let mut out = h.clone();
    if mask.missing_count() == 0 {
        return Ok(out);
    }
    match strategy {
        FillStrategy::Zf => {
            ndarray::Zip::from(&mut out)
                .and(observed)
                .for_each(|v, &o| {
                    if !o {
                        *v = 0.0
                    }
                });
        }
        FillStrategy::Mf => {
            let mean = global_mean()?;
            ndarray::Zip::from(&mut out)
                .and(observed)
                .for_each(|v, &o| {
                    if !o {
                        *v = mean
                    }
                });
        }
        FillStrategy::Nmf => {
            let mut fallback: Option<f64> = None;
            for i in 0..n {
                for j in 0..d {
                    if observed[[i, j]] {
                        continue;
                    }
                    let (sum, count) = g
                        .neighbors(i)
                        .filter(|&(k, _)| observed[[k, j]])
                        .fold((0.0, 0usize), |(s, c), (k, _)| (s + h[[k, j]], c + 1));
                    out[[i, j]] = if count > 0 {
                        sum / count as f64
                    } else {
                        match fallback {
                            Some(m) => m,
                            None => *fallback.insert(global_mean()?),
                        }
                    };
                }
            }
        }
    }
    Ok(out)
}
