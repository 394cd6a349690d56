//! Augmented Lagrangian outer loop for
//!
//! ```text
//! minimize ψ(u)  subject to  u ∈ C,  h(u) ∈ D
//! ```
//!
//! with boxes `C` and `D`. Each outer iteration minimizes
//! `ψ(u) + ½ dist²_Σ(h(u) + Σ⁻¹y, D)` over `C` with one of the composite
//! solvers.

use std::cell::Cell;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::directions::DirectionKind;
use crate::error::{check_dim, Error, Result};
use crate::fbstep::{estimate_lipschitz, FbParams};
use crate::linalg::norm_inf;
use crate::oracles::{counted_oracle, weighted_sq_dist_to_box, BoxSet, CompositeProblem, EvalCounters, SmoothOracle};
use crate::solvers::{solve, SolveParams, SolveStatus, SolverKind, TraceLevel};

/// Constraint function `h: R^n -> R^m` with Jacobian-transpose products.
pub trait ConstraintMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_h(&self, u: &[f64], out: &mut [f64]);
    /// `J_h(u)ᵀ w`.
    fn jtvp(&self, u: &[f64], w: &[f64], out: &mut [f64]);
}

/// `m = 0`.
#[derive(Debug, Clone, Copy)]
pub struct NoConstraints {
    pub n: usize,
}

impl ConstraintMap for NoConstraints {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        0
    }
    fn eval_h(&self, _u: &[f64], _out: &mut [f64]) {}
    fn jtvp(&self, _u: &[f64], _w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// `h(u) = Au + b`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl ConstraintMap for AffineConstraint {
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn eval_h(&self, u: &[f64], out: &mut [f64]) {
        let v = &self.a * nalgebra::DVector::from_column_slice(u);
        for i in 0..out.len() {
            out[i] = v[i] + self.b[i];
        }
    }
    fn jtvp(&self, _u: &[f64], w: &[f64], out: &mut [f64]) {
        let v = self.a.tr_mul(&nalgebra::DVector::from_column_slice(w));
        out.copy_from_slice(v.as_slice());
    }
}

pub struct NlpProblem {
    pub cost: Arc<dyn SmoothOracle + Send + Sync>,
    pub constraint: Arc<dyn ConstraintMap>,
    pub c_set: BoxSet,
    pub d_set: BoxSet,
}

impl NlpProblem {
    pub fn new(
        cost: Arc<dyn SmoothOracle + Send + Sync>,
        constraint: Arc<dyn ConstraintMap>,
        c_set: BoxSet,
        d_set: BoxSet,
    ) -> Result<Self> {
        check_dim(cost.dim(), constraint.dim_in())?;
        check_dim(cost.dim(), c_set.len())?;
        check_dim(constraint.dim_out(), d_set.len())?;
        Ok(Self {
            cost,
            constraint,
            c_set,
            d_set,
        })
    }

    pub fn dim(&self) -> usize {
        self.cost.dim()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraint.dim_out()
    }

    pub fn eval_h(&self, u: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.n_constraints()];
        self.constraint.eval_h(u, &mut h);
        h
    }

    /// `∇ψ(u) + J_h(u)ᵀ y`.
    pub fn lagrangian_gradient(&self, u: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut g = vec![0.0; n];
        self.cost.eval_grad(u, &mut g);
        if !y.is_empty() {
            let mut jt = vec![0.0; n];
            self.constraint.jtvp(u, y, &mut jt);
            g.iter_mut().zip(&jt).for_each(|(a, b)| *a += b);
        }
        g
    }
}

/// Smooth part of the ALM subproblem:
/// `ψ(u) + ½ dist²_Σ(h(u) + Σ⁻¹y, D)`, gradient `∇ψ(u) + J_hᵀ ŷ(u)` with
/// `ŷ(u) = Σ (v - Π_D(v))`, `v = h(u) + Σ⁻¹y`.
pub struct AlmInner<'a> {
    nlp: &'a NlpProblem,
    y: Vec<f64>,
    sigma: Vec<f64>,
}

impl AlmInner<'_> {
    /// `(penalty value, ŷ(u))`.
    fn penalty(&self, u: &[f64]) -> (f64, Vec<f64>) {
        if self.y.is_empty() {
            return (0.0, Vec::new());
        }
        let mut v = self.nlp.eval_h(u);
        for ((vi, y), s) in v.iter_mut().zip(&self.y).zip(&self.sigma) {
            *vi += y / s;
        }
        let (value, residual) = weighted_sq_dist_to_box(&v, &self.nlp.d_set, &self.sigma);
        let y_hat = residual.iter().zip(&self.sigma).map(|(r, s)| s * r).collect();
        (value, y_hat)
    }

    /// `ŷ(u)`, the candidate multiplier.
    pub fn multiplier_estimate(&self, u: &[f64]) -> Vec<f64> {
        self.penalty(u).1
    }
}

impl SmoothOracle for AlmInner<'_> {
    fn dim(&self) -> usize {
        self.nlp.dim()
    }

    fn eval_f(&self, u: &[f64]) -> f64 {
        self.nlp.cost.eval_f(u) + self.penalty(u).0
    }

    fn eval_grad(&self, u: &[f64], grad: &mut [f64]) {
        let (_, y_hat) = self.penalty(u);
        self.nlp.cost.eval_grad(u, grad);
        self.add_jtvp(u, &y_hat, grad);
    }

    fn eval_f_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let (pen, y_hat) = self.penalty(u);
        let f = self.nlp.cost.eval_f_grad(u, grad);
        self.add_jtvp(u, &y_hat, grad);
        f + pen
    }

    fn matvec_count(&self) -> u64 {
        self.nlp.cost.matvec_count()
    }
}

impl AlmInner<'_> {
    fn add_jtvp(&self, u: &[f64], w: &[f64], grad: &mut [f64]) {
        if w.is_empty() {
            return;
        }
        let mut jt = vec![0.0; grad.len()];
        self.nlp.constraint.jtvp(u, w, &mut jt);
        grad.iter_mut().zip(&jt).for_each(|(g, j)| *g += j);
    }
}

/// The composite subproblem for multipliers `y` and penalties `sigma`;
/// the proximable part is the indicator of `C`.
pub fn alm_inner_problem<'a>(
    nlp: &'a NlpProblem,
    y: &[f64],
    sigma: &[f64],
) -> CompositeProblem<AlmInner<'a>, &'a BoxSet> {
    CompositeProblem {
        smooth: AlmInner {
            nlp,
            y: y.to_vec(),
            sigma: sigma.to_vec(),
        },
        proximable: &nlp.c_set,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmConfig {
    pub inner: SolverKind,
    pub direction: DirectionKind,
    pub sigma0: f64,
    /// Penalty growth factor.
    pub penalty_growth: f64,
    /// Required infeasibility reduction factor per component.
    pub theta: f64,
    /// Inner tolerance reduction factor.
    pub rho_tol: f64,
    pub inner_tol0: f64,
    /// Primal (stationarity) tolerance.
    pub eps: f64,
    /// Dual (infeasibility) tolerance.
    pub delta: f64,
    pub y_max: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub max_outer: usize,
    pub inner_max_iter: usize,
    pub y0: Option<Vec<f64>>,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            inner: SolverKind::PanocPlus,
            direction: DirectionKind::Lbfgs { memory: 50 },
            sigma0: 1.0,
            penalty_growth: 10.0,
            theta: 0.5,
            rho_tol: 0.1,
            inner_tol0: 1.0,
            eps: 1e-4,
            delta: 1e-4,
            y_max: 1e9,
            sigma_max: 1e9,
            sigma_min: 1e-9,
            max_outer: 100,
            inner_max_iter: 1000,
            y0: None,
        }
    }
}

impl AlmConfig {
    pub fn final_inner_tol(&self) -> f64 {
        0.1 * self.eps.min(self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma0 > 0.0
            && self.penalty_growth > 1.0
            && self.theta > 0.0
            && self.theta < 1.0
            && self.rho_tol > 0.0
            && self.rho_tol < 1.0
            && self.inner_tol0 > 0.0
            && self.eps > 0.0
            && self.delta > 0.0
            && self.sigma_min > 0.0
            && self.sigma_min <= self.sigma0
            && self.sigma0 <= self.sigma_max
            && self.y_max > 0.0
            && self.max_outer > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid ALM configuration: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlmStatus {
    Converged,
    NotConverged,
    InnerFailure(SolveStatus),
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmOuterRecord {
    pub inner_status: SolveStatus,
    pub inner_iterations: usize,
    pub inner_tol: f64,
    pub inner_counters: EvalCounters,
    /// `||h(u) - Π_D(h(u) + Σ⁻¹y)||∞` with the multipliers before the update.
    pub infeasibility: f64,
    pub primal_residual: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmResult {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
    pub status: AlmStatus,
    pub outer_iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Inner solves plus overhead.
    pub counters: EvalCounters,
    /// Sum over inner solves.
    pub inner_counters: EvalCounters,
    /// Lipschitz estimation and criterion evaluations.
    pub overhead: EvalCounters,
    pub trace: Vec<AlmOuterRecord>,
}

/// `||u - Π_C(u - grad)||∞`.
fn projected_gradient_inf(u: &[f64], grad: &[f64], c_set: &BoxSet) -> f64 {
    let step: Vec<f64> = u.iter().zip(grad).map(|(a, b)| a - b).collect();
    let proj = c_set.projected(&step);
    u.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Safeguarded ALM. Inner solves warm-start at the previous `u`, start with
/// an empty direction buffer and carry the Lipschitz estimate over.
pub fn alm_solve(nlp: &NlpProblem, u0: &[f64], config: &AlmConfig) -> Result<AlmResult> {
    config.validate()?;
    check_dim(nlp.dim(), u0.len())?;
    if !u0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("initial guess".into()));
    }
    let m = nlp.n_constraints();
    let mut y = match &config.y0 {
        Some(y0) => {
            check_dim(m, y0.len())?;
            y0.clone()
        }
        None => vec![0.0; m],
    };
    let mut sigma = vec![config.sigma0; m];
    let final_tol = config.final_inner_tol();
    let mut inner_tol = if m == 0 { final_tol } else { config.inner_tol0.max(final_tol) };
    let mut u = nlp.c_set.projected(u0);
    let mut lipschitz: Option<f64> = None;
    let mut e_prev: Option<Vec<f64>> = None;
    let overhead_cell = Cell::new(EvalCounters::default());
    let mut inner_total = EvalCounters::default();
    let mut trace = Vec::new();
    let mut provider = config.direction.build();

    let mut status = AlmStatus::NotConverged;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    for outer in 0..config.max_outer {
        let inner = alm_inner_problem(nlp, &y, &sigma);
        let l = match lipschitz {
            Some(l) => l,
            None => {
                let counted = counted_oracle(&inner, &overhead_cell);
                estimate_lipschitz(&counted.smooth, &u)
            }
        };
        let fb = FbParams::new(l, config.inner.default_gamma_factor(), config.inner.merit());
        let params = SolveParams::new(config.inner, l)
            .with_fb(fb)
            .with_tol(inner_tol)
            .with_max_iter(config.inner_max_iter)
            .with_trace(TraceLevel::Off);
        provider.reset();
        let res = solve(&inner, &u, &params, provider.as_mut())?;
        inner_total += res.counters;
        if matches!(res.status, SolveStatus::Diverged | SolveStatus::LineSearchFailed) {
            status = AlmStatus::InnerFailure(res.status);
            trace.push(AlmOuterRecord {
                inner_status: res.status,
                inner_iterations: res.iterations,
                inner_tol,
                inner_counters: res.counters,
                infeasibility: f64::NAN,
                primal_residual: f64::NAN,
                sigma_max: sigma.iter().copied().fold(0.0, f64::max),
            });
            break;
        }
        u = res.x_final;
        lipschitz = Some(res.final_fb.lipschitz);

        // criteria with the multipliers used by this subproblem
        let counted = counted_oracle(&inner, &overhead_cell);
        let mut grad = vec![0.0; u.len()];
        counted.smooth.eval_grad(&u, &mut grad);
        primal = projected_gradient_inf(&u, &grad, &nlp.c_set);
        let y_hat = inner.smooth.multiplier_estimate(&u);
        let h = nlp.eval_h(&u);
        let e: Vec<f64> = (0..m)
            .map(|i| {
                let v = h[i] + y[i] / sigma[i];
                (h[i] - v.clamp(nlp.d_set.lo()[i], nlp.d_set.hi()[i])).abs()
            })
            .collect();
        dual = norm_inf(&e);
        trace.push(AlmOuterRecord {
            inner_status: res.status,
            inner_iterations: res.iterations,
            inner_tol,
            inner_counters: res.counters,
            infeasibility: dual,
            primal_residual: primal,
            sigma_max: sigma.iter().copied().fold(0.0, f64::max),
        });

        for i in 0..m {
            y[i] = y_hat[i].clamp(-config.y_max, config.y_max);
        }
        if primal <= config.eps && dual <= config.delta {
            status = AlmStatus::Converged;
            break;
        }
        if m == 0 || outer + 1 == config.max_outer {
            break;
        }
        if let Some(prev) = &e_prev {
            for i in 0..m {
                if e[i] > config.theta * prev[i] {
                    sigma[i] = (sigma[i] * config.penalty_growth).clamp(config.sigma_min, config.sigma_max);
                }
            }
        }
        e_prev = Some(e);
        inner_tol = (config.rho_tol * inner_tol).max(final_tol);
    }

    let overhead = overhead_cell.get();
    let mut counters = inner_total + overhead;
    counters.wall_time = inner_total.wall_time;
    Ok(AlmResult {
        u,
        y,
        sigma,
        status,
        outer_iterations: trace.len(),
        primal_residual: primal,
        dual_residual: dual,
        counters,
        inner_counters: inner_total,
        overhead,
        trace,
    })
}
