//! Preconditioned conjugate gradient for the symmetric positive definite
//! systems `(diag(d) − c·S) X = B` behind the closed-form propagators.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Relative residual at which a column solve is accepted.
pub const CG_TOL: f64 = 1e-12;

/// `diag(d) − c·S` for a symmetric sparse `S`.
#[derive(Debug, Clone)]
pub struct ShiftedOperator {
    s: CsrMatrix,
    diag: Array1<f64>,
    coupling: f64,
    inv_precond: Array1<f64>,
}

impl ShiftedOperator {
    pub fn new(s: &CsrMatrix, diag: Array1<f64>, coupling: f64) -> Result<Self> {
        if diag.len() != s.n() {
            return Err(Error::DimensionMismatch(format!(
                "diagonal has length {}, operator is {}×{}",
                diag.len(),
                s.n(),
                s.n()
            )));
        }
        let sd = s.diagonal();
        let mut inv_precond = Array1::zeros(s.n());
        for i in 0..s.n() {
            let a = diag[i] - coupling * sd[i];
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "operator diagonal entry {i} is {a}, expected positive"
                )));
            }
            inv_precond[i] = a.recip();
        }
        Ok(ShiftedOperator {
            s: s.clone(),
            diag,
            coupling,
            inv_precond,
        })
    }

    pub fn n(&self) -> usize {
        self.s.n()
    }

    pub fn apply_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut y = self.s.mul_vec(x);
        y *= -self.coupling;
        y += &(&self.diag * &x);
        y
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = self.s.mul_dense(x);
        y *= -self.coupling;
        y += &(&x * &self.diag.view().insert_axis(Axis(1)));
        y
    }

    fn max_iterations(&self) -> usize {
        (10 * self.n()).max(1000)
    }

    /// Solves one right-hand side.
    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let n = self.n();
        let b_norm = b.dot(&b).sqrt();
        let mut x = Array1::zeros(n);
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_owned();
        let mut z = &r * &self.inv_precond;
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        let cap = self.max_iterations();
        for _ in 0..cap {
            let ap = self.apply_vec(p.view());
            let step = rz / p.dot(&ap);
            x.scaled_add(step, &p);
            r.scaled_add(-step, &ap);
            let res = r.dot(&r).sqrt() / b_norm;
            if !res.is_finite() {
                return Err(Error::SolveNotConverged {
                    iterations: cap,
                    residual: res,
                });
            }
            if res <= CG_TOL {
                return Ok(x);
            }
            z = &r * &self.inv_precond;
            let rz_next = r.dot(&z);
            let beta = rz_next / rz;
            rz = rz_next;
            p = &z + &(&p * beta);
        }
        let res = (&b - &self.apply_vec(x.view()))
            .mapv(|v| v * v)
            .sum()
            .sqrt()
            / b_norm;
        Err(Error::SolveNotConverged {
            iterations: cap,
            residual: res,
        })
    }

    /// Solves every column of `b` independently.
    pub fn solve(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, operator has {}",
                b.nrows(),
                self.n()
            )));
        }
        let columns: Vec<ArrayView1<f64>> = b.axis_iter(Axis(1)).collect();
        #[cfg(feature = "parallel")]
        let solved: Vec<Result<Array1<f64>>> = {
            use rayon::prelude::*;
            columns.into_par_iter().map(|c| self.solve_vec(c)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let solved: Vec<Result<Array1<f64>>> =
            columns.into_iter().map(|c| self.solve_vec(c)).collect();

        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in solved.into_iter().enumerate() {
            out.column_mut(j).assign(&col?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_two_by_two() {
        // [[2, -1], [-1, 1]] x = [1, 0]  ->  x = [1, 1]
        let s = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        let op = ShiftedOperator::new(&s, array![2.0, 1.0], 1.0).unwrap();
        let x = op.solve(array![[1.0], [0.0]].view()).unwrap();
        assert!((x[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((x[[1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = CsrMatrix::zeros(3);
        let op = ShiftedOperator::new(&s, Array1::ones(3), 0.5).unwrap();
        assert_eq!(
            op.solve(Array2::zeros((3, 2)).view()).unwrap(),
            Array2::<f64>::zeros((3, 2))
        );
    }

    #[test]
    fn rejects_nonpositive_diagonal() {
        let s = CsrMatrix::zeros(2);
        assert!(ShiftedOperator::new(&s, array![1.0, 0.0], 1.0).is_err());
    }
}
