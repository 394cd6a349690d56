//! Random lasso instances `½||Ax - b||² + λ||x||₁`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::oracles::{CompositeProblem, L1Norm};
use crate::problems::quadratic::LeastSquares;

#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub ls: LeastSquares,
    pub l1: L1Norm,
    pub lipschitz: f64,
}

impl LassoInstance {
    pub fn problem(&self) -> CompositeProblem<LeastSquares, L1Norm> {
        CompositeProblem {
            smooth: self.ls.clone(),
            proximable: self.l1,
        }
    }

    /// `||Aᵀb||∞`, the weight above which `x = 0` is optimal.
    pub fn lambda_max(&self) -> f64 {
        let atb = self.ls.matrix().tr_mul(&nalgebra::DVector::from_column_slice(self.ls.rhs()));
        norm_inf(atb.as_slice())
    }
}

/// Gaussian `A ∈ R^{m×n}` scaled by `1/√m`, `b = A x_true + 0.01 noise`
/// with a 10%-sparse `x_true`, and `λ = lambda_ratio · ||Aᵀb||∞`.
pub fn make_lasso(m: usize, n: usize, lambda_ratio: f64, seed: u64) -> Result<LassoInstance> {
    if m == 0 || n == 0 {
        return Err(Error::Config("lasso dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let x_true: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.1 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
        .collect();
    let ax = &a * nalgebra::DVector::from_vec(x_true);
    let b: Vec<f64> = ax.iter().map(|v| v + 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
    let ls = LeastSquares::new(a, b)?;
    let lipschitz = ls.lipschitz();
    let mut inst = LassoInstance {
        ls,
        l1: L1Norm { dim: n, lambda: 0.0 },
        lipschitz,
    };
    inst.l1 = L1Norm::new(n, lambda_ratio * inst.lambda_max())?;
    Ok(inst)
}
