//! Forward-backward building blocks: the proximal-gradient operator
//! `T_gamma`, natural and normal residuals, the forward-backward envelope,
//! the prox-composed merit `psi_gamma = phi ∘ prox_{gamma g}`, and the
//! adaptive Lipschitz rule.
//!
//! Residual helpers take cached quantities and never touch an oracle. Only
//! [`pg_step`], [`fbe`], [`merit_psi`], [`adaptive_update`] and the
//! finite-difference Jacobians spend oracle calls.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::oracles::{CompositeProblem, ProxOracle, SmoothOracle};

/// Largest number of `L <- L / alpha` updates before the adaptive rule
/// gives up.
pub const MAX_LIPSCHITZ_UPDATES: usize = 60;

/// Default sufficient-decrease coefficient as a fraction of its upper bound.
pub const SIGMA_FRACTION: f64 = 0.1;

/// Which merit the linesearch decreases; this fixes the admissible
/// stepsize range and the bound on `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Merit {
    /// `psi_gamma`: `gamma < 2/L`, `sigma < gamma (2 - gamma L) / 2`.
    Psi,
    /// Forward-backward envelope: `gamma < 1/L`, `sigma < gamma (1 - gamma L) / 2`.
    Fbe,
}

impl Merit {
    pub fn sigma_bound(self, gamma: f64, lipschitz: f64) -> f64 {
        match self {
            Merit::Psi => gamma * (2.0 - gamma * lipschitz) / 2.0,
            Merit::Fbe => gamma * (1.0 - gamma * lipschitz) / 2.0,
        }
    }

    pub fn gamma_bound(self, lipschitz: f64) -> f64 {
        match self {
            Merit::Psi => 2.0 / lipschitz,
            Merit::Fbe => 1.0 / lipschitz,
        }
    }
}

/// Stepsize, Lipschitz estimate and linesearch constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbParams {
    pub gamma: f64,
    pub lipschitz: f64,
    pub sigma: f64,
    /// Backtracking ratio for the `tau` grid.
    pub beta: f64,
    /// Shrink ratio for the adaptive rule.
    pub alpha: f64,
    pub adaptive: bool,
}

impl FbParams {
    /// `gamma = gamma_factor / L` and `sigma = 0.1` times its bound for `merit`.
    pub fn new(lipschitz: f64, gamma_factor: f64, merit: Merit) -> Self {
        let gamma = gamma_factor / lipschitz;
        Self {
            gamma,
            lipschitz,
            sigma: SIGMA_FRACTION * merit.sigma_bound(gamma, lipschitz),
            beta: 0.5,
            alpha: 0.5,
            adaptive: true,
        }
    }

    /// `gamma = 1.95 / L`.
    pub fn for_psi(lipschitz: f64) -> Self {
        Self::new(lipschitz, 1.95, Merit::Psi)
    }

    /// `gamma = 0.95 / L`.
    pub fn for_fbe(lipschitz: f64) -> Self {
        Self::new(lipschitz, 0.95, Merit::Fbe)
    }

    pub fn with_adaptive(mut self, adaptive: bool) -> Self {
        self.adaptive = adaptive;
        self
    }

    pub fn validate(&self, merit: Merit) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} (params: {self:?})")));
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return bad("Lipschitz estimate must be positive and finite");
        }
        if !(self.gamma > 0.0 && self.gamma < merit.gamma_bound(self.lipschitz)) {
            return bad("stepsize outside the admissible range");
        }
        if !(self.sigma > 0.0 && self.sigma < merit.sigma_bound(self.gamma, self.lipschitz)) {
            return bad("sufficient-decrease coefficient outside the admissible range");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        Ok(())
    }

    /// `gamma <- alpha gamma`, `L <- L / alpha`, `sigma <- alpha sigma`.
    pub fn shrunk(&self) -> Self {
        Self {
            gamma: self.alpha * self.gamma,
            lipschitz: self.lipschitz / self.alpha,
            sigma: self.alpha * self.sigma,
            ..*self
        }
    }
}

/// Quantities cached for one iteration of the prox-merit linesearch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FbState {
    /// Prox point `x̂`.
    pub x_hat: Vec<f64>,
    /// Forward point `x̄ = x̂ - gamma ∇f(x̂)`.
    pub x_bar: Vec<f64>,
    pub grad_at_x_hat: Vec<f64>,
    /// `prox_{gamma g}(x̄)`.
    pub p: Vec<f64>,
    pub g_at_p: f64,
    pub r_nat: Vec<f64>,
    pub r_nor: Vec<f64>,
    pub phi_at_x_hat: f64,
}

/// `x - gamma * grad`
pub fn forward_point(x: &[f64], grad: &[f64], gamma: f64) -> Vec<f64> {
    x.iter().zip(grad).map(|(xi, gi)| xi - gamma * gi).collect()
}

/// `T_gamma(x) = prox_{gamma g}(x - gamma ∇f(x))`; one gradient and one prox.
pub fn pg_step<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    problem.smooth.eval_grad(x, &mut grad);
    let z = forward_point(x, &grad, gamma);
    let mut p = vec![0.0; x.len()];
    problem.proximable.prox(&z, gamma, &mut p);
    p
}

/// `(x̂ - p) / gamma` with `p = T_gamma(x̂)`.
pub fn natural_residual(x_hat: &[f64], p: &[f64], gamma: f64) -> Vec<f64> {
    x_hat.iter().zip(p).map(|(x, p)| (x - p) / gamma).collect()
}

/// `∇f(p) + (z - p) / gamma` with `p = prox_{gamma g}(z)`.
pub fn normal_residual(z: &[f64], p: &[f64], grad_at_p: &[f64], gamma: f64) -> Vec<f64> {
    z.iter()
        .zip(p)
        .zip(grad_at_p)
        .map(|((z, p), g)| g + (z - p) / gamma)
        .collect()
}

/// FBE from cached pieces: `f(x) + g(T(x)) - gamma <∇f(x), R> + gamma/2 ||R||²`.
pub fn fbe_from_parts(f_x: f64, grad_x: &[f64], g_at_t: f64, r_nat: &[f64], gamma: f64) -> f64 {
    f_x + g_at_t - gamma * dot(grad_x, r_nat) + 0.5 * gamma * norm_sq(r_nat)
}

/// Forward-backward envelope at `x`: one `f`, one gradient, one prox.
pub fn fbe<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x: &[f64],
    gamma: f64,
) -> f64 {
    let mut grad = vec![0.0; x.len()];
    let f_x = problem.smooth.eval_f_grad(x, &mut grad);
    let z = forward_point(x, &grad, gamma);
    let mut t = vec![0.0; x.len()];
    let g_t = problem.proximable.prox(&z, gamma, &mut t);
    let r = natural_residual(x, &t, gamma);
    fbe_from_parts(f_x, &grad, g_t, &r, gamma)
}

/// `psi_gamma(x) = phi(prox_{gamma g}(x))`: one prox and one `f`, no gradient.
pub fn merit_psi<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x: &[f64],
    gamma: f64,
) -> f64 {
    let mut p = vec![0.0; x.len()];
    let g_p = problem.proximable.prox(x, gamma, &mut p);
    problem.smooth.eval_f(&p) + g_p
}

/// True when `f(y)` exceeds the quadratic upper model at `x` with modulus
/// `L`, beyond a relative rounding guard.
pub fn descent_bound_violated(
    f_y: f64,
    f_x: f64,
    grad_x: &[f64],
    x: &[f64],
    y: &[f64],
    lipschitz: f64,
) -> bool {
    let mut inner = 0.0;
    let mut sq = 0.0;
    for ((xi, yi), gi) in x.iter().zip(y).zip(grad_x) {
        let d = xi - yi;
        inner += gi * d;
        sq += d * d;
    }
    let rhs = f_x - inner + 0.5 * lipschitz * sq;
    let guard = 10.0 * f64::EPSILON * f_x.abs().max(1.0);
    !(f_y <= rhs + guard)
}

/// Checks the quadratic upper bound between `x̂` and `T_gamma(x̂)`
/// (reusing `grad_x_hat`) and shrinks `gamma`, `sigma` and grows `L` until it
/// holds. Returns the possibly updated parameters and whether an update
/// happened.
pub fn adaptive_update<F: SmoothOracle, G: ProxOracle>(
    params: &FbParams,
    x_hat: &[f64],
    f_x_hat: f64,
    grad_x_hat: &[f64],
    problem: &CompositeProblem<F, G>,
) -> Result<(FbParams, bool)> {
    let mut params = *params;
    if !params.adaptive {
        return Ok((params, false));
    }
    let mut y = vec![0.0; x_hat.len()];
    let mut updates = 0;
    loop {
        let z = forward_point(x_hat, grad_x_hat, params.gamma);
        problem.proximable.prox(&z, params.gamma, &mut y);
        let f_y = problem.smooth.eval_f(&y);
        if !descent_bound_violated(f_y, f_x_hat, grad_x_hat, x_hat, &y, params.lipschitz) {
            return Ok((params, updates > 0));
        }
        if updates == MAX_LIPSCHITZ_UPDATES {
            return Err(Error::Nonsmooth {
                updates,
                lipschitz: params.lipschitz,
            });
        }
        params = params.shrunk();
        updates += 1;
    }
}

/// Finite-difference Lipschitz estimate `||∇f(x + h) - ∇f(x)|| / ||h||`
/// with `h_i = 1e-6 max(|x_i|, 1)`; two gradients.
pub fn estimate_lipschitz<F: SmoothOracle>(smooth: &F, x: &[f64]) -> f64 {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-6 * v.abs().max(1.0)).collect();
    let xh: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
    let (mut g0, mut g1) = (vec![0.0; n], vec![0.0; n]);
    smooth.eval_grad(x, &mut g0);
    smooth.eval_grad(&xh, &mut g1);
    let num = crate::linalg::dist(&g0, &g1);
    let den = crate::linalg::norm(&h);
    (num / den).max(1e-6)
}

/// Fresh `R^nat_gamma(x)`: one gradient and one prox.
pub fn natural_residual_at<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let t = pg_step(problem, x, gamma);
    natural_residual(x, &t, gamma)
}

/// Fresh `R^nor_gamma(z)`: one prox and one gradient.
pub fn normal_residual_at<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    z: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let mut p = vec![0.0; z.len()];
    problem.proximable.prox(z, gamma, &mut p);
    let mut grad = vec![0.0; z.len()];
    problem.smooth.eval_grad(&p, &mut grad);
    normal_residual(z, &p, &grad, gamma)
}

/// `eps^(1/3) * max(1, ||z||)`.
pub fn default_fd_step(z: &[f64]) -> f64 {
    f64::EPSILON.cbrt() * crate::linalg::norm(z).max(1.0)
}

fn central_jacobian(z: &[f64], h: f64, mut map: impl FnMut(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let n = z.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut zp = z.to_vec();
    for j in 0..n {
        zp[j] = z[j] + h;
        let fp = map(&zp);
        zp[j] = z[j] - h;
        let fm = map(&zp);
        zp[j] = z[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Central-difference Jacobian of `R^nor_gamma` at `z`, column by column.
/// `h = None` uses [`default_fd_step`].
pub fn normal_residual_jacobian_fd<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    z: &[f64],
    gamma: f64,
    h: Option<f64>,
) -> DMatrix<f64> {
    let h = h.unwrap_or_else(|| default_fd_step(z));
    central_jacobian(z, h, |v| normal_residual_at(problem, v, gamma))
}

/// Central-difference Jacobian of `R^nat_gamma` at `x`.
pub fn natural_residual_jacobian_fd<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x: &[f64],
    gamma: f64,
    h: Option<f64>,
) -> DMatrix<f64> {
    let h = h.unwrap_or_else(|| default_fd_step(x));
    central_jacobian(x, h, |v| natural_residual_at(problem, v, gamma))
}
