#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use robustgcn::graph::Graph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with uniform weights in [0.5, 2]; a random spanning path
/// is added when `connected`.
pub fn random_graph(n: usize, p: f64, connected: bool, rng: &mut impl Rng) -> Graph {
    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in w.iter_mut().enumerate() {
        for v in row.iter_mut().skip(i + 1) {
            if rng.random::<f64>() < p {
                *v = rng.random_range(0.5..2.0);
            }
        }
    }
    if connected {
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        for pair in order.windows(2) {
            let (i, j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if w[i][j] == 0.0 {
                w[i][j] = 1.0;
            }
        }
    }
    let mut edges = Vec::new();
    for (i, row) in w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                edges.push((i, j, v));
            }
        }
    }
    Graph::from_undirected_edges(n, &edges).unwrap()
}

pub fn gaussian(n: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(rng))
}

pub fn to_dense(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_dense(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn adjacency_dense(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for (i, j, w) in g.edges() {
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    a
}

/// `D^{-1/2} A D^{-1/2}` built entry by entry, with zero rows for isolated nodes.
pub fn normalized_dense(g: &Graph) -> DMatrix<f64> {
    let a = adjacency_dense(g);
    let n = g.n();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if deg[i] > 0.0 && deg[j] > 0.0 {
            a[(i, j)] / (deg[i] * deg[j]).sqrt()
        } else {
            0.0
        }
    })
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Dense `‖Z−H‖₁ + α·Tr(Zᵀ(I−S)Z)` on row-major `n×d` buffers.
pub fn l1_objective(s: &DMatrix<f64>, h: &[f64], z: &[f64], d: usize, alpha: f64) -> f64 {
    let n = s.nrows();
    let mut fit = 0.0;
    for k in 0..n * d {
        fit += (z[k] - h[k]).abs();
    }
    let mut smooth = 0.0;
    for i in 0..n {
        for c in 0..d {
            let mut sz = 0.0;
            for j in 0..n {
                sz += s[(i, j)] * z[j * d + c];
            }
            smooth += z[i * d + c] * (z[i * d + c] - sz);
        }
    }
    fit + alpha * smooth
}

/// Subgradient descent on the ℓ1 objective with step `a₀/√(k+1)`, returning
/// the best objective seen. Entirely independent of the library solvers.
pub fn subgradient_oracle(
    s: &DMatrix<f64>,
    h: &Array2<f64>,
    alpha: f64,
    steps: usize,
    a0: f64,
) -> f64 {
    let (n, d) = h.dim();
    let hv: Vec<f64> = h.iter().copied().collect();
    let mut z = hv.clone();
    let mut best = l1_objective(s, &hv, &z, d, alpha);
    let mut g = vec![0.0; n * d];
    for k in 0..steps {
        for i in 0..n {
            for c in 0..d {
                let mut sz = 0.0;
                for j in 0..n {
                    sz += s[(i, j)] * z[j * d + c];
                }
                let r = z[i * d + c] - hv[i * d + c];
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g[i * d + c] = sign + 2.0 * alpha * (z[i * d + c] - sz);
            }
        }
        let step = a0 / ((k + 1) as f64).sqrt();
        for (zk, gk) in z.iter_mut().zip(&g) {
            *zk -= step * gk;
        }
        best = best.min(l1_objective(s, &hv, &z, d, alpha));
    }
    best
}
