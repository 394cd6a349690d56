//! Problem oracles: the smooth part `f`, the proximable part `g`, a small
//! catalog of proximal operators, and the call counters used as the
//! performance metric.

use std::cell::Cell;
use std::ops::{Add, AddAssign};
use std::sync::Arc;
use std::time::Duration;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// Feasibility slack used by indicator functions when evaluated at
/// arbitrary points.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Smooth term `f` of the composite objective.
pub trait SmoothOracle {
    fn dim(&self) -> usize;

    fn eval_f(&self, x: &[f64]) -> f64;

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]);

    /// Value and gradient at the same point.
    fn eval_f_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.eval_f(x);
        self.eval_grad(x, grad);
        f
    }

    /// Dense Hessian block `[∇²f(x)]_{rows, cols}`, if available.
    fn hessian_block(&self, _x: &[f64], _rows: &[usize], _cols: &[usize]) -> Option<DMatrix<f64>> {
        None
    }

    /// Cumulative number of matrix-vector products performed by this
    /// oracle instance. Oracles without a data matrix report zero.
    fn matvec_count(&self) -> u64 {
        0
    }
}

/// Convex, proximable term `g`.
pub trait ProxOracle {
    fn dim(&self) -> usize;

    /// Writes `prox_{gamma g}(x)` into `out` and returns `g(out)`.
    fn prox(&self, x: &[f64], gamma: f64, out: &mut [f64]) -> f64;

    fn eval_g(&self, x: &[f64]) -> f64;

    /// The box when `g` is a box indicator (used by structured directions).
    fn box_bounds(&self) -> Option<&BoxSet> {
        None
    }
}

macro_rules! forward_oracles {
    ($($ptr:ty),*) => {$(
        impl<T: SmoothOracle + ?Sized> SmoothOracle for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn eval_f(&self, x: &[f64]) -> f64 { (**self).eval_f(x) }
            fn eval_grad(&self, x: &[f64], grad: &mut [f64]) { (**self).eval_grad(x, grad) }
            fn eval_f_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 { (**self).eval_f_grad(x, grad) }
            fn hessian_block(&self, x: &[f64], rows: &[usize], cols: &[usize]) -> Option<DMatrix<f64>> {
                (**self).hessian_block(x, rows, cols)
            }
            fn matvec_count(&self) -> u64 { (**self).matvec_count() }
        }

        impl<T: ProxOracle + ?Sized> ProxOracle for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn prox(&self, x: &[f64], gamma: f64, out: &mut [f64]) -> f64 { (**self).prox(x, gamma, out) }
            fn eval_g(&self, x: &[f64]) -> f64 { (**self).eval_g(x) }
            fn box_bounds(&self) -> Option<&BoxSet> { (**self).box_bounds() }
        }
    )*};
}

forward_oracles!(&T, Box<T>, Arc<T>);

/// `phi = f + g` over a shared dimension.
#[derive(Debug, Clone)]
pub struct CompositeProblem<F, G> {
    pub smooth: F,
    pub proximable: G,
}

impl<F: SmoothOracle, G: ProxOracle> CompositeProblem<F, G> {
    pub fn new(smooth: F, proximable: G) -> Result<Self> {
        check_dim(smooth.dim(), proximable.dim())?;
        Ok(Self { smooth, proximable })
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    /// `phi(x) = f(x) + g(x)`.
    pub fn eval_phi(&self, x: &[f64]) -> f64 {
        self.smooth.eval_f(x) + self.proximable.eval_g(x)
    }

    pub fn as_ref(&self) -> CompositeProblem<&F, &G> {
        CompositeProblem {
            smooth: &self.smooth,
            proximable: &self.proximable,
        }
    }
}

pub type DynProblem = CompositeProblem<
    Box<dyn SmoothOracle + Send + Sync>,
    Box<dyn ProxOracle + Send + Sync>,
>;

/// Oracle call tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub n_f: u64,
    pub n_grad: u64,
    pub n_prox: u64,
    pub n_g: u64,
    pub n_matvec: u64,
    pub wall_time: Duration,
}

impl EvalCounters {
    /// The "function + gradient evaluations" metric.
    pub fn evals_f_plus_grad(&self) -> u64 {
        self.n_f + self.n_grad
    }

    /// Componentwise difference `self - earlier` (wall time included).
    pub fn since(&self, earlier: &EvalCounters) -> EvalCounters {
        EvalCounters {
            n_f: self.n_f - earlier.n_f,
            n_grad: self.n_grad - earlier.n_grad,
            n_prox: self.n_prox - earlier.n_prox,
            n_g: self.n_g - earlier.n_g,
            n_matvec: self.n_matvec - earlier.n_matvec,
            wall_time: self.wall_time.saturating_sub(earlier.wall_time),
        }
    }
}

impl Add for EvalCounters {
    type Output = EvalCounters;
    fn add(mut self, rhs: EvalCounters) -> EvalCounters {
        self += rhs;
        self
    }
}

impl AddAssign for EvalCounters {
    fn add_assign(&mut self, rhs: EvalCounters) {
        self.n_f += rhs.n_f;
        self.n_grad += rhs.n_grad;
        self.n_prox += rhs.n_prox;
        self.n_g += rhs.n_g;
        self.n_matvec += rhs.n_matvec;
        self.wall_time += rhs.wall_time;
    }
}

impl std::iter::Sum for EvalCounters {
    fn sum<I: Iterator<Item = EvalCounters>>(iter: I) -> Self {
        iter.fold(EvalCounters::default(), |a, b| a + b)
    }
}

/// Pass-through wrapper that tallies every oracle call into a shared cell.
#[derive(Debug, Clone, Copy)]
pub struct Counted<'a, T> {
    inner: &'a T,
    counters: &'a Cell<EvalCounters>,
}

impl<'a, T> Counted<'a, T> {
    pub fn new(inner: &'a T, counters: &'a Cell<EvalCounters>) -> Self {
        Self { inner, counters }
    }

    fn bump(&self, f: impl FnOnce(&mut EvalCounters)) {
        let mut c = self.counters.get();
        f(&mut c);
        self.counters.set(c);
    }
}

impl<T: SmoothOracle> Counted<'_, T> {
    fn with_matvecs<R>(&self, call: impl FnOnce(&T) -> R) -> R {
        let before = self.inner.matvec_count();
        let out = call(self.inner);
        let used = self.inner.matvec_count().saturating_sub(before);
        self.bump(|c| c.n_matvec += used);
        out
    }
}

impl<T: SmoothOracle> SmoothOracle for Counted<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_f(&self, x: &[f64]) -> f64 {
        self.bump(|c| c.n_f += 1);
        self.with_matvecs(|o| o.eval_f(x))
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) {
        self.bump(|c| c.n_grad += 1);
        self.with_matvecs(|o| o.eval_grad(x, grad))
    }

    fn eval_f_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.bump(|c| {
            c.n_f += 1;
            c.n_grad += 1;
        });
        self.with_matvecs(|o| o.eval_f_grad(x, grad))
    }

    fn hessian_block(&self, x: &[f64], rows: &[usize], cols: &[usize]) -> Option<DMatrix<f64>> {
        self.inner.hessian_block(x, rows, cols)
    }

    fn matvec_count(&self) -> u64 {
        self.inner.matvec_count()
    }
}

impl<T: ProxOracle> ProxOracle for Counted<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn prox(&self, x: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
        self.bump(|c| {
            c.n_prox += 1;
            c.n_g += 1;
        });
        self.inner.prox(x, gamma, out)
    }

    fn eval_g(&self, x: &[f64]) -> f64 {
        self.bump(|c| c.n_g += 1);
        self.inner.eval_g(x)
    }

    fn box_bounds(&self) -> Option<&BoxSet> {
        self.inner.box_bounds()
    }
}

/// Wraps both oracles of `problem` so that every call is tallied in
/// `counters`. Returned values are those of the wrapped oracles.
pub fn counted_oracle<'a, F, G>(
    problem: &'a CompositeProblem<F, G>,
    counters: &'a Cell<EvalCounters>,
) -> CompositeProblem<Counted<'a, F>, Counted<'a, G>> {
    CompositeProblem {
        smooth: Counted::new(&problem.smooth, counters),
        proximable: Counted::new(&problem.proximable, counters),
    }
}

/// `g ≡ 0`; its prox is the identity.
#[derive(Debug, Clone, Copy)]
pub struct ZeroFunction {
    pub dim: usize,
}

impl ZeroFunction {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ProxOracle for ZeroFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn prox(&self, x: &[f64], _gamma: f64, out: &mut [f64]) -> f64 {
        out.copy_from_slice(x);
        0.0
    }

    fn eval_g(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Componentwise soft threshold `sign(x_i) max(|x_i| - threshold, 0)`.
/// Returns the thresholded vector and its l1 norm.
pub fn prox_l1(x: &[f64], threshold: f64) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; x.len()];
    let norm = soft_threshold(x, threshold, &mut out);
    (out, norm)
}

fn soft_threshold(x: &[f64], threshold: f64, out: &mut [f64]) -> f64 {
    let mut l1 = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        let m = (v.abs() - threshold).max(0.0);
        *o = m.copysign(v);
        if m == 0.0 {
            *o = 0.0;
        }
        l1 += m;
    }
    l1
}

/// `g(x) = lambda ||x||_1`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub dim: usize,
    pub lambda: f64,
}

impl L1Norm {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("l1 weight must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { dim, lambda })
    }
}

impl ProxOracle for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn prox(&self, x: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
        self.lambda * soft_threshold(x, gamma * self.lambda, out)
    }

    fn eval_g(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Box `{x : lo <= x <= hi}`; as a [`ProxOracle`] it is the indicator of
/// the box. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::Config(format!(
                    "malformed box bound at index {i}: lo = {l}, hi = {h}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    /// The whole space.
    pub fn unbounded(n: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &v), (&l, &h)) in out.iter_mut().zip(x).zip(self.lo.iter().zip(&self.hi)) {
            *o = v.clamp(l, h);
        }
    }

    pub fn projected(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.project(x, &mut out);
        out
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }

    /// Concatenation of boxes, e.g. per-stage bounds over a horizon.
    pub fn stacked(parts: &[&BoxSet]) -> BoxSet {
        BoxSet {
            lo: parts.iter().flat_map(|b| b.lo.iter().copied()).collect(),
            hi: parts.iter().flat_map(|b| b.hi.iter().copied()).collect(),
        }
    }

    pub fn repeated(&self, times: usize) -> BoxSet {
        BoxSet {
            lo: self.lo.repeat(times),
            hi: self.hi.repeat(times),
        }
    }
}

impl ProxOracle for BoxSet {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn prox(&self, x: &[f64], _gamma: f64, out: &mut [f64]) -> f64 {
        self.project(x, out);
        0.0
    }

    fn eval_g(&self, x: &[f64]) -> f64 {
        if self.contains(x, FEASIBILITY_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn box_bounds(&self) -> Option<&BoxSet> {
        Some(self)
    }
}

/// Projection onto `[lo, hi]`; the indicator value at the output is 0.
pub fn prox_box(x: &[f64], lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, f64)> {
    let set = BoxSet::new(lo.to_vec(), hi.to_vec())?;
    check_dim(set.len(), x.len())?;
    Ok((set.projected(x), 0.0))
}

/// `½ Σ_i w_i (v_i - Π_D(v)_i)²` together with the residual `v - Π_D(v)`.
pub fn weighted_sq_dist_to_box(v: &[f64], set: &BoxSet, weights: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(v.len(), set.len());
    debug_assert_eq!(v.len(), weights.len());
    let mut value = 0.0;
    let residual: Vec<f64> = v
        .iter()
        .zip(set.lo.iter().zip(&set.hi))
        .zip(weights)
        .map(|((&vi, (&l, &h)), &w)| {
            let r = vi - vi.clamp(l, h);
            value += w * r * r;
            r
        })
        .collect();
    (0.5 * value, residual)
}
