//! Datasets: the portable on-disk bundle, a stochastic-block-model generator
//! for desk-scale experiments, and train/validation/test splits.
//!
//! A bundle is a directory with four UTF-8 files:
//!
//! * `meta`: `key = value` lines with `format_version`, `name`, `n`, `d`, `c`
//!   and `features` (`"sparse"` or `"dense"`); optional `weighted = true`
//!   keeps edge weights instead of binarizing.
//! * `edges`: `i<TAB>j<TAB>weight` per line, 0-indexed.
//! * `features`: `i<TAB>j<TAB>value` triplets, or `n` comma-separated rows when dense.
//! * `labels`: one class index per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Extra `meta` entries and how the adjacency was preprocessed.
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.features.nrows() != self.n() || self.labels.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes, features {} rows, labels {}",
                self.n(),
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if let Some((line, &label)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.classes)
        {
            return Err(Error::LabelOutOfRange {
                line: line + 1,
                label,
                classes: self.classes,
            });
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "features contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Node indices of each class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Sparse,
    Dense,
}

#[derive(Debug, Deserialize)]
struct Meta {
    format_version: i64,
    name: String,
    n: usize,
    d: usize,
    c: usize,
    #[serde(default = "default_format")]
    features: FeatureFormat,
    #[serde(default)]
    weighted: bool,
}

fn default_format() -> FeatureFormat {
    FeatureFormat::Sparse
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_field<T: FromStr>(file: &Path, line: usize, field: Option<&str>, what: &str) -> Result<T> {
    let raw = field.ok_or_else(|| malformed(file, line, format!("missing {what}")))?;
    raw.trim()
        .parse()
        .map_err(|_| malformed(file, line, format!("cannot parse {what} from `{raw}`")))
}

fn parse_triplets(file: &Path, text: &str) -> Result<Vec<(usize, usize, f64)>> {
    content_lines(text)
        .map(|(line, l)| {
            let mut parts = l.split('\t');
            let i = parse_field(file, line, parts.next(), "row index")?;
            let j = parse_field(file, line, parts.next(), "column index")?;
            let v = parse_field(file, line, parts.next(), "value")?;
            if parts.next().is_some() {
                return Err(malformed(file, line, "expected three tab-separated fields"));
            }
            Ok((i, j, v))
        })
        .collect()
}

/// Loads and validates a bundle directory.
///
/// Edges are symmetrized by `max(A, Aᵀ)`, self-loops dropped, and weights
/// binarized unless the bundle declares `weighted = true`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let dir = path.as_ref();
    let meta_path = dir.join("meta");
    let meta_text = read(&meta_path)?;
    let table: toml::Table = meta_text
        .parse()
        .map_err(|e: toml::de::Error| malformed(&meta_path, 0, e.to_string()))?;
    let meta: Meta = table
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| malformed(&meta_path, 0, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(malformed(
            &meta_path,
            0,
            format!("unsupported format_version {}", meta.format_version),
        ));
    }
    let (n, d, c) = (meta.n, meta.d, meta.c);

    let edges_path = dir.join("edges");
    let entries = parse_triplets(&edges_path, &read(&edges_path)?)?;
    if let Some(&(i, j, _)) = entries.iter().find(|&&(i, j, _)| i >= n || j >= n) {
        return Err(Error::DimensionMismatch(format!(
            "edge ({i}, {j}) in {} exceeds n = {n}",
            edges_path.display()
        )));
    }
    let graph = Graph::symmetrized(n, &entries, !meta.weighted)?;

    let features_path = dir.join("features");
    let features_text = read(&features_path)?;
    let features = match meta.features {
        FeatureFormat::Sparse => {
            let mut x = Array2::zeros((n, d));
            for (i, j, v) in parse_triplets(&features_path, &features_text)? {
                if i >= n || j >= d {
                    return Err(Error::DimensionMismatch(format!(
                        "feature entry ({i}, {j}) outside {n}×{d}"
                    )));
                }
                x[[i, j]] = v;
            }
            x
        }
        FeatureFormat::Dense => {
            let rows: Vec<(usize, &str)> = content_lines(&features_text).collect();
            if rows.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} has {} rows, expected {n}",
                    features_path.display(),
                    rows.len()
                )));
            }
            let mut x = Array2::zeros((n, d));
            for (i, (line, l)) in rows.into_iter().enumerate() {
                let values: Vec<&str> = l.split(',').collect();
                if values.len() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "{} line {line} has {} columns, expected {d}",
                        features_path.display(),
                        values.len()
                    )));
                }
                for (j, v) in values.into_iter().enumerate() {
                    x[[i, j]] = parse_field(&features_path, line, Some(v), "value")?;
                }
            }
            x
        }
    };

    let labels_path = dir.join("labels");
    let labels_text = read(&labels_path)?;
    let mut labels = Vec::with_capacity(n);
    for (line, l) in content_lines(&labels_text) {
        let label: usize = parse_field(&labels_path, line, Some(l), "label")?;
        if label >= c {
            return Err(Error::LabelOutOfRange {
                line,
                label,
                classes: c,
            });
        }
        labels.push(label);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} labels, expected {n}",
            labels_path.display(),
            labels.len()
        )));
    }

    let mut metadata: BTreeMap<String, String> = table
        .iter()
        .filter(|(k, _)| {
            !matches!(
                k.as_str(),
                "format_version" | "name" | "n" | "d" | "c" | "features" | "weighted"
            )
        })
        .map(|(k, v)| {
            (
                k.clone(),
                v.as_str().map_or_else(|| v.to_string(), str::to_string),
            )
        })
        .collect();
    metadata.insert(
        "adjacency".into(),
        if meta.weighted {
            "symmetrized-max"
        } else {
            "symmetrized-max,binarized"
        }
        .into(),
    );
    metadata.insert("source".into(), dir.display().to_string());

    let ds = Dataset {
        name: meta.name,
        graph,
        features,
        labels,
        classes: c,
        metadata,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes a bundle directory readable by [`load_dataset`].
pub fn save_dataset(
    ds: &Dataset,
    path: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<PathBuf> {
    ds.validate()?;
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let weighted = ds.graph.edges().any(|(_, _, w)| w != 1.0);

    let mut meta = String::new();
    writeln!(meta, "format_version = {FORMAT_VERSION}").unwrap();
    writeln!(meta, "name = {}", toml::Value::String(ds.name.clone())).unwrap();
    writeln!(meta, "n = {}\nd = {}\nc = {}", ds.n(), ds.d(), ds.classes).unwrap();
    writeln!(
        meta,
        "features = \"{}\"",
        match format {
            FeatureFormat::Sparse => "sparse",
            FeatureFormat::Dense => "dense",
        }
    )
    .unwrap();
    if weighted {
        writeln!(meta, "weighted = true").unwrap();
    }

    let mut edges = String::new();
    for (i, j, w) in ds.graph.edges() {
        writeln!(edges, "{i}\t{j}\t{w}").unwrap();
    }

    let mut features = String::new();
    match format {
        FeatureFormat::Sparse => {
            for ((i, j), v) in ds.features.indexed_iter() {
                if *v != 0.0 {
                    writeln!(features, "{i}\t{j}\t{v}").unwrap();
                }
            }
        }
        FeatureFormat::Dense => {
            for row in ds.features.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(features, "{}", line.join(",")).unwrap();
            }
        }
    }

    let mut labels = String::new();
    for l in &ds.labels {
        writeln!(labels, "{l}").unwrap();
    }

    for (file, body) in [
        ("meta", meta),
        ("edges", edges),
        ("features", features),
        ("labels", labels),
    ] {
        let p = dir.join(file);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(dir.to_path_buf())
}

/// Parameters of [`synth_communities`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub signal_dims: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 3,
            nodes_per_class: 100,
            p_in: 0.1,
            p_out: 0.01,
            signal_dims: 4,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl FromStr for SynthSpec {
    type Err = Error;

    /// Parses `key=value` pairs separated by commas, e.g. `classes=3,p_in=0.1`.
    /// Unlisted keys keep their defaults; an empty string gives the default spec.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
            let bad = |_| Error::Config(format!("invalid value `{value}` for `{key}`"));
            let value = value.trim();
            match key.trim() {
                "classes" => {
                    spec.classes = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "nodes" | "nodes_per_class" => {
                    spec.nodes_per_class = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "p_in" => {
                    spec.p_in = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "p_out" => {
                    spec.p_out = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "dims" | "signal_dims" => {
                    spec.signal_dims = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "noise" | "noise_std" => {
                    spec.noise_std = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown synthetic parameter `{other}`"
                    )))
                }
            }
        }
        Ok(spec)
    }
}

/// Stochastic block model with one block per class. Node `i` belongs to
/// class `i / nodes_per_class`; its features are the class indicator over
/// `signal_dims` dedicated columns plus i.i.d. `N(0, noise_std²)` noise.
pub fn synth_communities(spec: &SynthSpec) -> Result<Dataset> {
    let SynthSpec {
        classes,
        nodes_per_class,
        p_in,
        p_out,
        signal_dims,
        noise_std,
        seed,
    } = *spec;
    if classes == 0 || nodes_per_class == 0 || signal_dims == 0 {
        return Err(Error::InvalidParameter(
            "classes, nodes_per_class and signal_dims must be ≥ 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_in <= p_out {
        return Err(Error::InvalidParameter(format!(
            "need 0 ≤ p_out < p_in ≤ 1, got p_in = {p_in}, p_out = {p_out}"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise_std must be ≥ 0, got {noise_std}"
        )));
    }
    let n = classes * nodes_per_class;
    let d = classes * signal_dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i / nodes_per_class).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    let graph = Graph::from_undirected_edges(n, &edges)?;

    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let features = Array2::from_shape_fn((n, d), |(i, j)| {
        let signal = if j / signal_dims == labels[i] {
            1.0
        } else {
            0.0
        };
        signal + noise.sample(&mut rng)
    });

    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), format!("{spec:?}"));
    Ok(Dataset {
        name: "synthetic".into(),
        graph,
        features,
        labels,
        classes,
        metadata,
    })
}

/// Undirected k-nearest-neighbour graph by cosine similarity, unit weights.
pub fn knn_graph(features: &Array2<f64>, k: usize) -> Result<Graph> {
    let n = features.nrows();
    if k == 0 || k >= n.max(1) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in [1, n) with n = {n}"
        )));
    }
    let norms: Vec<f64> = features
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let mut entries = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut sims: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let denom = norms[i] * norms[j];
                let sim = if denom > 0.0 {
                    features.row(i).dot(&features.row(j)) / denom
                } else {
                    0.0
                };
                (sim, j)
            })
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        entries.extend(sims.into_iter().take(k).map(|(_, j)| (i, j, 1.0)));
    }
    Graph::symmetrized(n, &entries, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSelection {
    /// A fixed number of labelled nodes from every class.
    PerClass(usize),
    /// A fixed total drawn uniformly regardless of class.
    Total(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: TrainSelection,
    pub val_size: usize,
    /// `None` uses every remaining node.
    pub test_size: Option<usize>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: TrainSelection::PerClass(20),
            val_size: 500,
            test_size: Some(1000),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn check_disjoint(&self) -> Result<()> {
        let mut all: Vec<usize> = self
            .train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .copied()
            .collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != total {
            return Err(Error::InfeasibleSplit("train/val/test sets overlap".into()));
        }
        Ok(())
    }

    /// Boolean membership mask over `n` nodes.
    pub fn mask(nodes: &[usize], n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in nodes {
            m[i] = true;
        }
        m
    }
}

/// Draws disjoint train, validation and test node sets.
pub fn make_splits(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let n = ds.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = vec![false; n];
    let mut train = Vec::new();
    match spec.train {
        TrainSelection::PerClass(k) => {
            for (class, mut members) in ds.class_members().into_iter().enumerate() {
                if members.len() < k {
                    return Err(Error::InfeasibleSplit(format!(
                        "class {class} has {} nodes, {k} requested for training",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                train.extend_from_slice(&members[..k]);
            }
        }
        TrainSelection::Total(k) => {
            if k > n {
                return Err(Error::InfeasibleSplit(format!(
                    "{k} training nodes requested from {n}"
                )));
            }
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            train.extend_from_slice(&all[..k]);
        }
    }
    for &i in &train {
        taken[i] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    rest.shuffle(&mut rng);
    let test_size = spec
        .test_size
        .unwrap_or(rest.len().saturating_sub(spec.val_size));
    if spec.val_size + test_size > rest.len() {
        return Err(Error::InfeasibleSplit(format!(
            "{} validation + {test_size} test nodes requested, {} remain after training selection",
            spec.val_size,
            rest.len()
        )));
    }
    let mut val = rest[..spec.val_size].to_vec();
    let mut test = rest[spec.val_size..spec.val_size + test_size].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}
