//! Quadratic and least-squares smooth terms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::oracles::SmoothOracle;

/// `f(x) = ½ xᵀQx + qᵀx + c` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFn {
    hessian: DMatrix<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl QuadraticFn {
    /// Panics if `hessian` is not square or `linear` has the wrong length.
    pub fn new(hessian: DMatrix<f64>, linear: Vec<f64>, constant: f64) -> Self {
        assert!(hessian.is_square(), "quadratic term must be square");
        assert_eq!(hessian.nrows(), linear.len(), "linear term dimension mismatch");
        Self {
            hessian,
            linear,
            constant,
        }
    }

    pub fn try_new(hessian: DMatrix<f64>, linear: Vec<f64>, constant: f64) -> Result<Self> {
        if !hessian.is_square() {
            return Err(Error::Config("quadratic term must be square".into()));
        }
        check_dim(hessian.nrows(), linear.len())?;
        Ok(Self::new(hessian, linear, constant))
    }

    /// `Q = diag(diag)`, constant zero.
    pub fn diagonal(diag: Vec<f64>, linear: Vec<f64>) -> Self {
        let h = DMatrix::from_diagonal(&DVector::from_vec(diag));
        Self::new(h, linear, 0.0)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Largest absolute eigenvalue of `Q`, i.e. the Lipschitz constant of `∇f`.
    pub fn lipschitz(&self) -> f64 {
        SymmetricEigen::new(self.hessian.clone())
            .eigenvalues
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    fn qx(&self, x: &[f64]) -> DVector<f64> {
        &self.hessian * DVector::from_column_slice(x)
    }
}

impl SmoothOracle for QuadraticFn {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn eval_f(&self, x: &[f64]) -> f64 {
        let qx = self.qx(x);
        let mut v = self.constant;
        for i in 0..x.len() {
            v += x[i] * (0.5 * qx[i] + self.linear[i]);
        }
        v
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) {
        let qx = self.qx(x);
        for i in 0..x.len() {
            grad[i] = qx[i] + self.linear[i];
        }
    }

    fn eval_f_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let qx = self.qx(x);
        let mut v = self.constant;
        for i in 0..x.len() {
            v += x[i] * (0.5 * qx[i] + self.linear[i]);
            grad[i] = qx[i] + self.linear[i];
        }
        v
    }

    fn hessian_block(&self, _x: &[f64], rows: &[usize], cols: &[usize]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.hessian[(rows[i], cols[j])]
        }))
    }
}

/// `f(x) = ½ ||Ax - b||²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    b: Vec<f64>,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        Ok(Self { a, b })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// `||A||₂²`.
    pub fn lipschitz(&self) -> f64 {
        let ata = self.a.transpose() * &self.a;
        SymmetricEigen::new(ata).eigenvalues.max().max(0.0)
    }

    fn residual(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) - DVector::from_column_slice(&self.b)
    }
}

impl SmoothOracle for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn eval_f(&self, x: &[f64]) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) {
        let g = self.a.tr_mul(&self.residual(x));
        grad.copy_from_slice(g.as_slice());
    }

    fn eval_f_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let r = self.residual(x);
        grad.copy_from_slice(self.a.tr_mul(&r).as_slice());
        0.5 * r.norm_squared()
    }

    fn hessian_block(&self, _x: &[f64], rows: &[usize], cols: &[usize]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.a.column(rows[i]).dot(&self.a.column(cols[j]))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_values() {
        let q = QuadraticFn::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]), vec![1.0, -1.0], 0.5);
        let x = [1.0, 2.0];
        // ½(2 + 4 + 12) + (1 - 2) + 0.5
        assert_abs_diff_eq!(q.eval_f(&x), 8.5, epsilon = 1e-15);
        let mut g = [0.0; 2];
        q.eval_grad(&x, &mut g);
        assert_eq!(g, [5.0, 6.0]);
        let b = q.hessian_block(&x, &[1], &[0, 1]).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(1, 2, &[1.0, 3.0]));
    }

    #[test]
    fn least_squares_gradient_matches_normal_equations() {
        let ls = LeastSquares::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]), vec![1.0, 0.0, 2.0]).unwrap();
        let mut g = [0.0; 2];
        let f = ls.eval_f_grad(&[0.0, 0.0], &mut g);
        assert_eq!(f, 2.5);
        assert_eq!(g, [-3.0, -2.0]);
        let h = ls.hessian_block(&[0.0, 0.0], &[0, 1], &[0, 1]).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 5.0]));
    }
}
