//! Strongly convex box-constrained QPs with a known solution.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::oracles::{BoxSet, CompositeProblem, ProxOracle, SmoothOracle};
use crate::problems::quadratic::QuadraticFn;

/// Multiplier magnitude on active coordinates.
const ACTIVE_MULTIPLIER: f64 = 1.0;
/// Interior coordinates of the solution are drawn from `(-INTERIOR, INTERIOR)`.
const INTERIOR: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct BoxQpInstance {
    pub quad: QuadraticFn,
    pub bounds: BoxSet,
    pub x_star: Vec<f64>,
    /// `+1` at the upper bound, `-1` at the lower bound, `0` inactive.
    pub multiplier_signs: Vec<i8>,
    pub lipschitz: f64,
}

impl BoxQpInstance {
    /// Builds `q` so that `x_star` is the strictly complementary solution:
    /// `∇f(x_star)_i = 0` on inactive coordinates, `-1` at an upper bound and
    /// `+1` at a lower bound.
    pub fn with_solution(hessian: DMatrix<f64>, bounds: BoxSet, x_star: Vec<f64>) -> Result<Self> {
        check_dim(bounds.len(), x_star.len())?;
        if !bounds.contains(&x_star, 0.0) {
            return Err(Error::Config("solution lies outside the box".into()));
        }
        let n = x_star.len();
        let mut signs = vec![0i8; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            if x_star[i] == bounds.hi()[i] {
                signs[i] = 1;
                v[i] = -ACTIVE_MULTIPLIER;
            } else if x_star[i] == bounds.lo()[i] {
                signs[i] = -1;
                v[i] = ACTIVE_MULTIPLIER;
            }
        }
        let qx = &hessian * nalgebra::DVector::from_column_slice(&x_star);
        let linear: Vec<f64> = (0..n).map(|i| v[i] - qx[i]).collect();
        let quad = QuadraticFn::try_new(hessian, linear, 0.0)?;
        let lipschitz = quad.lipschitz();
        Ok(Self {
            quad,
            bounds,
            x_star,
            multiplier_signs: signs,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn problem(&self) -> CompositeProblem<QuadraticFn, BoxSet> {
        CompositeProblem {
            smooth: self.quad.clone(),
            proximable: self.bounds.clone(),
        }
    }

    pub fn phi_star(&self) -> f64 {
        self.quad.eval_f(&self.x_star) + self.bounds.eval_g(&self.x_star)
    }

    /// True on coordinates where the box is inactive at the solution.
    pub fn inactive_mask(&self) -> Vec<bool> {
        self.multiplier_signs.iter().map(|&s| s == 0).collect()
    }
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the factor is unique
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q = U diag(logspace(1, 100)) Uᵀ` on the box `[-1, 1]^n` with
/// `round(active_fraction · n)` coordinates of the solution at a bound.
pub fn make_box_qp(n: usize, seed: u64, active_fraction: f64) -> Result<BoxQpInstance> {
    if n == 0 {
        return Err(Error::Config("box-QP dimension must be positive".into()));
    }
    if !(0.0..1.0).contains(&active_fraction) {
        return Err(Error::Config(format!(
            "active fraction must lie in [0, 1), got {active_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthogonal(n, &mut rng);
    let eig: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 1.0 } else { 10f64.powf(2.0 * i as f64 / (n - 1) as f64) })
        .collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig));
    let mut hessian = &u * d * u.transpose();
    // exact symmetry
    hessian = (&hessian + hessian.transpose()) * 0.5;

    let n_active = (active_fraction * n as f64).round() as usize;
    let active = sample(&mut rng, n, n_active).into_vec();
    let mut x_star: Vec<f64> = (0..n).map(|_| rng.random_range(-INTERIOR..INTERIOR)).collect();
    for &i in &active {
        x_star[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    BoxQpInstance::with_solution(hessian, BoxSet::uniform(n, -1.0, 1.0)?, x_star)
}
