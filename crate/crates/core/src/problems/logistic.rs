//! Sparse l1-regularized logistic regression.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm, norm_inf};
use crate::oracles::{CompositeProblem, L1Norm, SmoothOracle};
use crate::problems::sparse::CsrMatrix;

const POWER_ITERATIONS: usize = 50;
const POWER_RTOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LogisticProblem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub lambda: f64,
}

impl LogisticProblem {
    pub fn new(a: CsrMatrix, b: Vec<f64>, lambda: f64) -> Result<Self> {
        a.check_rows(b.len())?;
        if let Some(i) = b.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Config(format!("label {i} is {} (expected ±1)", b[i])));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("regularization weight must be >= 0, got {lambda}")));
        }
        Ok(Self { a, b, lambda })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn lambda_max(&self) -> f64 {
        lambda_max(&self.a, &self.b)
    }

    /// `0.25 ||A||₂²` by power iteration on `AᵀA`.
    pub fn lipschitz_estimate(&self) -> f64 {
        0.25 * spectral_norm_sq(&self.a)
    }
}

/// `½ ||Aᵀb||∞`: smallest weight for which `x = 0` is optimal.
pub fn lambda_max(a: &CsrMatrix, b: &[f64]) -> f64 {
    let mut atb = vec![0.0; a.ncols()];
    a.tmatvec(b, &mut atb);
    0.5 * norm_inf(&atb)
}

/// `||A||₂²` from at most 50 power iterations on `AᵀA`.
pub fn spectral_norm_sq(a: &CsrMatrix) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; a.nrows()];
    let mut w = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..POWER_ITERATIONS {
        a.matvec(&v, &mut av);
        a.tmatvec(&av, &mut w);
        let next = norm(&w);
        if next == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / next);
        let done = (next - est).abs() <= POWER_RTOL * next;
        est = next;
        if done {
            break;
        }
    }
    est
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + e^t)` without overflow.
fn logistic_weight(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// `f(x) = Σ ln(1 + exp(-bᵢ⟨aᵢ,x⟩))`.
///
/// The last product `Ax` is memoized, so a gradient right after `f` at the
/// same point costs one matrix-vector product instead of two.
#[derive(Debug)]
pub struct LogisticFn {
    a: CsrMatrix,
    b: Vec<f64>,
    memo: Mutex<Option<(Vec<f64>, Vec<f64>)>>,
    matvecs: AtomicU64,
}

impl Clone for LogisticFn {
    fn clone(&self) -> Self {
        Self::new(self.a.clone(), self.b.clone())
    }
}

impl LogisticFn {
    pub fn new(a: CsrMatrix, b: Vec<f64>) -> Self {
        Self {
            a,
            b,
            memo: Mutex::new(None),
            matvecs: AtomicU64::new(0),
        }
    }

    fn product(&self, x: &[f64]) -> Vec<f64> {
        let mut memo = self.memo.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((mx, ax)) = memo.as_ref() {
            if mx.as_slice() == x {
                return ax.clone();
            }
        }
        let mut ax = vec![0.0; self.a.nrows()];
        self.a.matvec(x, &mut ax);
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        *memo = Some((x.to_vec(), ax.clone()));
        ax
    }

    fn value_from_product(&self, ax: &[f64]) -> f64 {
        ax.iter().zip(&self.b).map(|(t, b)| softplus(-b * t)).sum()
    }

    fn grad_from_product(&self, ax: &[f64], grad: &mut [f64]) {
        let w: Vec<f64> = ax.iter().zip(&self.b).map(|(t, b)| -b * logistic_weight(b * t)).collect();
        self.a.tmatvec(&w, grad);
        self.matvecs.fetch_add(1, Ordering::Relaxed);
    }
}

impl SmoothOracle for LogisticFn {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn eval_f(&self, x: &[f64]) -> f64 {
        let ax = self.product(x);
        self.value_from_product(&ax)
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) {
        let ax = self.product(x);
        self.grad_from_product(&ax, grad);
    }

    fn eval_f_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let ax = self.product(x);
        self.grad_from_product(&ax, grad);
        self.value_from_product(&ax)
    }

    fn matvec_count(&self) -> u64 {
        self.matvecs.load(Ordering::Relaxed)
    }
}

/// Smooth logistic loss plus `λ||x||₁`. Each call builds a fresh oracle with
/// its own product counter.
pub fn logistic_oracle(p: &LogisticProblem) -> CompositeProblem<LogisticFn, L1Norm> {
    CompositeProblem {
        smooth: LogisticFn::new(p.a.clone(), p.b.clone()),
        proximable: L1Norm {
            dim: p.dim(),
            lambda: p.lambda,
        },
    }
}

/// Synthetic classification data: sparse Gaussian features with the given
/// density, labels from a sparse ground-truth model with 5% flips.
pub fn make_synthetic_logistic(m: usize, n: usize, density: f64, seed: u64) -> (CsrMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.1 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
        .collect();
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = Vec::new();
        let mut t = 0.0;
        for (j, &tj) in truth.iter().enumerate() {
            if rng.random::<f64>() < density {
                let v: f64 = rng.sample(StandardNormal);
                t += v * tj;
                row.push((j, v));
            }
        }
        let mut label = if t >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < 0.05 {
            label = -label;
        }
        rows.push(row);
        labels.push(label);
    }
    (CsrMatrix::from_rows(n, &rows).expect("generated rows are sorted"), labels)
}
