//! Compressed sparse row storage for square graph operators.
//!
//! Products against dense feature matrices are parallel over output rows when
//! the `parallel` feature is enabled. Each output row is accumulated by one
//! thread in a fixed order, so results are bitwise identical to the sequential
//! path regardless of the thread count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};

/// Below this many multiply-adds the sequential kernel is used.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from triplets. Duplicate coordinates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(
                i < n && j < n,
                "triplet ({i}, {j}) out of bounds for n = {n}"
            );
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(n: usize) -> Self {
        CsrMatrix {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `(column, value)` pairs of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n, |i| self.get(i, i))
    }

    pub fn row_sums(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n, |i| self.row(i).map(|(_, v)| v).sum())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Returns `diag(left) · self · diag(right)`.
    pub fn scale(&self, left: &Array1<f64>, right: &Array1<f64>) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] *= left[i] * right[self.indices[k]];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.n, &triplets)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets()
            .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol * v.abs().max(1.0))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (i, j, v) in self.triplets() {
            out[[i, j]] += v;
        }
        out
    }

    pub fn mul_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.n);
        Array1::from_shape_fn(self.n, |i| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    fn fill_row(&self, i: usize, x: &ArrayView2<f64>, mut out: ArrayViewMut1<f64>) {
        out.fill(0.0);
        for (j, v) in self.row(i) {
            out.scaled_add(v, &x.row(j));
        }
    }

    /// `self · x` computed on the calling thread.
    pub fn mul_dense_seq(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(
            x.nrows(),
            self.n,
            "operand has {} rows, expected {}",
            x.nrows(),
            self.n
        );
        let mut out = Array2::zeros((self.n, x.ncols()));
        for (i, row) in out.axis_iter_mut(Axis(0)).enumerate() {
            self.fill_row(i, &x, row);
        }
        out
    }

    /// `self · x` with output rows distributed over the rayon pool.
    #[cfg(feature = "parallel")]
    pub fn mul_dense_par(&self, x: ArrayView2<f64>) -> Array2<f64> {
        use ndarray::parallel::prelude::*;
        assert_eq!(
            x.nrows(),
            self.n,
            "operand has {} rows, expected {}",
            x.nrows(),
            self.n
        );
        let mut out = Array2::zeros((self.n, x.ncols()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, row)| self.fill_row(i, &x, row));
        out
    }

    /// `self · x`, dispatching to the parallel kernel for large products.
    pub fn mul_dense(&self, x: ArrayView2<f64>) -> Array2<f64> {
        #[cfg(feature = "parallel")]
        {
            if self.nnz().max(self.n) * x.ncols() >= PAR_THRESHOLD {
                return self.mul_dense_par(x);
            }
        }
        self.mul_dense_seq(x)
    }
}
