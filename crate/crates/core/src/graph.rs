//! Undirected weighted graphs and the symmetric normalized operator
//! `S = D^{-1/2} A D^{-1/2}` consumed by every propagation function.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Relative tolerance of the power iteration used by [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-6;
/// Iteration cap of the power iteration used by [`spectral_norm`].
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Symmetric, non-negative, loop-free adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: CsrMatrix,
}

impl Graph {
    /// Builds a graph from explicit matrix entries `(i, j, w)`. Both `(i, j)` and
    /// `(j, i)` must be listed with equal weight.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, w) in entries {
            check_entry(n, i, j, w)?;
        }
        let adjacency = CsrMatrix::from_triplets(
            n,
            &entries
                .iter()
                .copied()
                .filter(|e| e.2 != 0.0)
                .collect::<Vec<_>>(),
        );
        let graph = Graph { adjacency };
        graph.validate()?;
        Ok(graph)
    }

    /// Builds a graph from undirected edges, each listed once.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(2 * edges.len());
        for &(i, j, w) in edges {
            check_entry(n, i, j, w)?;
            if w != 0.0 {
                entries.push((i, j, w));
                entries.push((j, i, w));
            }
        }
        Ok(Graph {
            adjacency: CsrMatrix::from_triplets(n, &entries),
        })
    }

    /// Symmetrizes arbitrary entries by `max(A, Aᵀ)`, dropping self-loops.
    /// With `binarize`, every retained edge gets weight 1.
    pub fn symmetrized(n: usize, entries: &[(usize, usize, f64)], binarize: bool) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for &(i, j, w) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has invalid weight {w}"
                )));
            }
            if i == j || w == 0.0 {
                continue;
            }
            let w = if binarize { 1.0 } else { w };
            let key = (i.min(j), i.max(j));
            let slot = map.entry(key).or_insert(w);
            *slot = f64::max(*slot, w);
        }
        let edges: Vec<_> = map.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        Graph::from_undirected_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency.row(i)
    }

    pub fn degrees(&self) -> Array1<f64> {
        self.adjacency.row_sums()
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.triplets().filter(|&(i, j, _)| i < j)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, j, w) in self.adjacency.triplets() {
            check_entry(self.n(), i, j, w)?;
            let back = self.adjacency.get(j, i);
            if back != w {
                return Err(Error::InvalidGraph(format!(
                    "asymmetric weights: A[{i},{j}] = {w} but A[{j},{i}] = {back}"
                )));
            }
        }
        Ok(())
    }

    /// Connected components as a label per node, labels in order of first node.
    pub fn components(&self) -> Vec<usize> {
        connected_components(&self.adjacency)
    }

    /// Row-stochastic `D^{-1} A`; rows of isolated nodes are zero.
    pub fn random_walk(&self) -> CsrMatrix {
        let inv = self.degrees().mapv(|d| if d > 0.0 { 1.0 / d } else { 0.0 });
        self.adjacency.scale(&inv, &Array1::ones(self.n()))
    }

    /// The graph with the same node order relabelled by `perm` (node `i` becomes `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let triplets: Vec<_> = self
            .adjacency
            .triplets()
            .map(|(i, j, w)| (perm[i], perm[j], w))
            .collect();
        Graph {
            adjacency: CsrMatrix::from_triplets(self.n(), &triplets),
        }
    }
}

/// Components of the sparsity pattern of a structurally symmetric matrix.
pub fn connected_components(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for (v, _) in m.row(u) {
                if label[v] == usize::MAX {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

fn check_entry(n: usize, i: usize, j: usize, w: f64) -> Result<()> {
    if i >= n || j >= n {
        return Err(Error::InvalidGraph(format!(
            "edge ({i}, {j}) out of range for {n} nodes"
        )));
    }
    if i == j {
        return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
    }
    if !w.is_finite() || w < 0.0 {
        return Err(Error::InvalidGraph(format!(
            "edge ({i}, {j}) has invalid weight {w}"
        )));
    }
    Ok(())
}

/// `S = D^{-1/2} A D^{-1/2}` together with which nodes have zero degree.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOperator {
    s: CsrMatrix,
    isolated: Vec<bool>,
    renormalized: bool,
}

impl NormalizedOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.s.n()
    }

    pub fn isolated(&self) -> &[bool] {
        &self.isolated
    }

    pub fn has_isolated(&self) -> bool {
        self.isolated.iter().any(|&b| b)
    }

    /// Whether self-loops were added before normalizing.
    pub fn is_renormalized(&self) -> bool {
        self.renormalized
    }

    /// `S · x`.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.s.mul_dense(x)
    }

    /// `(I − S) · x`.
    pub fn apply_laplacian(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        out -= &self.s.mul_dense(x);
        out
    }

    /// `‖I − S‖₂` by power iteration.
    pub fn laplacian_norm(&self) -> Result<f64> {
        spectral_norm(self)
    }
}

/// `D^{-1/2} A D^{-1/2}` with `D_ii = Σ_j A_ij`. Isolated nodes get `D_ii^{-1/2} = 0`.
pub fn build_normalized_adjacency(g: &Graph) -> Result<NormalizedOperator> {
    g.validate()?;
    let deg = g.degrees();
    let inv_sqrt = deg.mapv(|d| if d > 0.0 { d.sqrt().recip() } else { 0.0 });
    Ok(NormalizedOperator {
        s: g.adjacency().scale(&inv_sqrt, &inv_sqrt),
        isolated: deg.iter().map(|&d| d == 0.0).collect(),
        renormalized: false,
    })
}

/// The `Ã = A + I` variant: `D̃^{-1/2} Ã D̃^{-1/2}`. No node is isolated afterwards.
pub fn build_renormalized_adjacency(g: &Graph) -> Result<NormalizedOperator> {
    g.validate()?;
    let n = g.n();
    let mut triplets: Vec<_> = g.adjacency().triplets().collect();
    triplets.extend((0..n).map(|i| (i, i, 1.0)));
    let a = CsrMatrix::from_triplets(n, &triplets);
    let inv_sqrt = a.row_sums().mapv(|d| d.sqrt().recip());
    Ok(NormalizedOperator {
        s: a.scale(&inv_sqrt, &inv_sqrt),
        isolated: vec![false; n],
        renormalized: true,
    })
}

/// `‖I − S‖₂` for a symmetric `S`, by power iteration on the positive
/// semidefinite `I − S`.
///
/// Stops once the eigen-residual `‖(I−S)v − ρv‖` falls below
/// [`SPECTRAL_TOL`]`·ρ`; fails after [`SPECTRAL_MAX_ITER`] iterations.
pub fn spectral_norm(op: &NormalizedOperator) -> Result<f64> {
    let n = op.n();
    if n == 0 {
        return Ok(0.0);
    }
    let s = op.matrix();
    let apply = |v: &Array1<f64>| -> Array1<f64> { v - &s.mul_vec(v.view()) };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f1a9);
    let mut v: Array1<f64> = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let norm = v.dot(&v).sqrt();
    v /= norm;

    let mut estimate = 0.0;
    for _ in 0..SPECTRAL_MAX_ITER {
        let w = apply(&v);
        let rho = v.dot(&w);
        let residual = (&w - &(&v * rho)).mapv(|x| x * x).sum().sqrt();
        estimate = rho;
        if residual <= SPECTRAL_TOL * rho.abs().max(f64::MIN_POSITIVE) {
            return Ok(rho);
        }
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w / wn;
    }
    Err(Error::SpectralNormNotConverged {
        iterations: SPECTRAL_MAX_ITER,
        estimate,
    })
}
