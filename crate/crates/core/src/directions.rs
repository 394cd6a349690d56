//! Direction providers for the quasi-Newton step `d = -H r` taken from the
//! forward point.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{axpy, dot, norm};
use crate::oracles::{BoxSet, SmoothOracle};

/// Pairs with `<s, y> <= EPS_CURVATURE ||s|| ||y||` are skipped.
pub const EPS_CURVATURE: f64 = 1e-12;
/// Tolerance for detecting active box constraints.
pub const EPS_ACTIVE: f64 = 1e-12;
const REGULARIZATION_LADDER: [f64; 3] = [1e-8, 1e-4, 1.0];

/// What a provider may look at when producing a direction.
pub struct DirectionInput<'a> {
    /// Point at which the direction is taken (the forward point).
    pub x: &'a [f64],
    /// Residual at `x`.
    pub residual: &'a [f64],
    /// `prox_{gamma g}(x)`.
    pub prox_point: &'a [f64],
    /// `∇f(prox_point)`.
    pub grad_at_prox: &'a [f64],
    pub gamma: f64,
    /// Hessian-block access for structured directions.
    pub hessian: Option<&'a dyn SmoothOracle>,
    /// Box of `g` when it is a box indicator.
    pub bounds: Option<&'a BoxSet>,
}

impl<'a> DirectionInput<'a> {
    /// Input carrying only a residual; enough for L-BFGS and the zero
    /// direction.
    pub fn residual_only(x: &'a [f64], residual: &'a [f64]) -> Self {
        Self {
            x,
            residual,
            prox_point: x,
            grad_at_prox: residual,
            gamma: 1.0,
            hessian: None,
            bounds: None,
        }
    }
}

pub trait DirectionProvider {
    fn initialize(&mut self, x0: &[f64], r0: &[f64]);

    /// Offers the pair `s = x_{k+1} - x_k`, `y = r_{k+1} - r_k`; returns
    /// whether it was stored.
    fn update(&mut self, s: &[f64], y: &[f64]) -> bool;

    fn direction(&mut self, input: &DirectionInput<'_>) -> Vec<f64>;

    /// Drops all curvature information (e.g. after a stepsize change).
    fn reset(&mut self);

    fn name(&self) -> &'static str;
}

/// Provider selector used by configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    Lbfgs { memory: usize },
    StructuredNewton { memory: usize },
    Zero,
}

impl DirectionKind {
    pub fn build(self) -> Box<dyn DirectionProvider + Send> {
        match self {
            DirectionKind::Lbfgs { memory } => Box::new(Lbfgs::new(memory)),
            DirectionKind::StructuredNewton { memory } => Box::new(StructuredNewton::new(memory)),
            DirectionKind::Zero => Box::new(ZeroDirection),
        }
    }
}

#[derive(Debug, Clone)]
struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Limited-memory inverse-BFGS operator over a ring of `(s, y)` pairs.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    memory: usize,
    pairs: VecDeque<Pair>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        assert!(memory > 0, "L-BFGS memory must be positive");
        Self {
            memory,
            pairs: VecDeque::with_capacity(memory),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.memory
    }

    /// Stores `(s, y)` if its curvature passes the cautious test, evicting
    /// the oldest pair at capacity.
    ///
    /// Panics on a length mismatch.
    pub fn push(&mut self, s: &[f64], y: &[f64]) -> bool {
        assert_eq!(s.len(), y.len(), "L-BFGS pair dimension mismatch");
        let sy = dot(s, y);
        if !(sy > EPS_CURVATURE * norm(s) * norm(y)) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s: s.to_vec(),
            y: y.to_vec(),
            rho: 1.0 / sy,
        });
        true
    }

    /// `H r` by the two-loop recursion, seeded with `<s,y>/<y,y>` of the
    /// newest pair (identity when empty).
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut q = r.to_vec();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (i, p) in self.pairs.iter().enumerate().rev() {
            let a = p.rho * dot(&p.s, &q);
            alphas[i] = a;
            axpy(-a, &p.y, &mut q);
        }
        if let Some(last) = self.pairs.back() {
            let seed = 1.0 / (last.rho * dot(&last.y, &last.y));
            q.iter_mut().for_each(|v| *v *= seed);
        }
        for (p, a) in self.pairs.iter().zip(&alphas) {
            let b = p.rho * dot(&p.y, &q);
            axpy(a - b, &p.s, &mut q);
        }
        q
    }

    /// `-H r`.
    pub fn direction_for(&self, r: &[f64]) -> Vec<f64> {
        let mut d = self.apply(r);
        d.iter_mut().for_each(|v| *v = -*v);
        d
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }
}

impl DirectionProvider for Lbfgs {
    fn initialize(&mut self, _x0: &[f64], _r0: &[f64]) {
        self.clear();
    }

    fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        self.push(s, y)
    }

    fn direction(&mut self, input: &DirectionInput<'_>) -> Vec<f64> {
        self.direction_for(input.residual)
    }

    fn reset(&mut self) {
        self.clear();
    }

    fn name(&self) -> &'static str {
        "lbfgs"
    }
}

/// Always returns zero; turns the prox-merit method into plain proximal
/// gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDirection;

pub fn zero_direction(r: &[f64]) -> Vec<f64> {
    vec![0.0; r.len()]
}

impl DirectionProvider for ZeroDirection {
    fn initialize(&mut self, _x0: &[f64], _r0: &[f64]) {}

    fn update(&mut self, _s: &[f64], _y: &[f64]) -> bool {
        false
    }

    fn direction(&mut self, input: &DirectionInput<'_>) -> Vec<f64> {
        zero_direction(input.residual)
    }

    fn reset(&mut self) {}

    fn name(&self) -> &'static str {
        "zero"
    }
}

/// The structured solve failed to factor the inactive Hessian block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularBlock;

/// Newton direction for box-constrained problems. With `K` the active and
/// `J` the inactive coordinates at `x` and `x̂ = prox(x)`:
///
/// ```text
/// ∇²_JJ f(x̂) d_J = -∇_J f(x̂)
/// d_K = -gamma [r]_K - gamma ∇²_KJ f(x̂) d_J
/// ```
pub fn structured_newton_box(
    x: &[f64],
    r_nor: &[f64],
    x_hat: &[f64],
    grad_at_x_hat: &[f64],
    hessian: &dyn SmoothOracle,
    bounds: &BoxSet,
    gamma: f64,
) -> Result<Vec<f64>, SingularBlock> {
    let n = x.len();
    let (mut active, mut inactive) = (Vec::new(), Vec::new());
    for i in 0..n {
        let at_bound = x[i] <= bounds.lo()[i] + EPS_ACTIVE || x[i] >= bounds.hi()[i] - EPS_ACTIVE;
        if at_bound {
            active.push(i);
        } else {
            inactive.push(i);
        }
    }
    let mut d = vec![0.0; n];
    if inactive.is_empty() {
        for i in 0..n {
            d[i] = -gamma * r_nor[i];
        }
        return Ok(d);
    }

    let h_jj = hessian
        .hessian_block(x_hat, &inactive, &inactive)
        .ok_or(SingularBlock)?;
    let rhs = DVector::from_iterator(inactive.len(), inactive.iter().map(|&j| -grad_at_x_hat[j]));
    let chol = Cholesky::new(h_jj.clone()).or_else(|| {
        REGULARIZATION_LADDER.iter().find_map(|&delta| {
            let shifted = &h_jj + DMatrix::identity(inactive.len(), inactive.len()) * delta;
            Cholesky::new(shifted)
        })
    });
    let d_j = chol.ok_or(SingularBlock)?.solve(&rhs);
    if !d_j.iter().all(|v| v.is_finite()) {
        return Err(SingularBlock);
    }
    for (k, &j) in inactive.iter().enumerate() {
        d[j] = d_j[k];
    }
    if !active.is_empty() {
        let h_kj = hessian
            .hessian_block(x_hat, &active, &inactive)
            .ok_or(SingularBlock)?;
        let coupling = h_kj * &d_j;
        for (k, &i) in active.iter().enumerate() {
            d[i] = -gamma * r_nor[i] - gamma * coupling[k];
        }
    }
    Ok(d)
}

/// [`structured_newton_box`] with an L-BFGS fallback for non-box `g`,
/// missing Hessians or singular blocks.
#[derive(Debug, Clone)]
pub struct StructuredNewton {
    fallback: Lbfgs,
    fallbacks_used: usize,
}

impl StructuredNewton {
    pub fn new(memory: usize) -> Self {
        Self {
            fallback: Lbfgs::new(memory),
            fallbacks_used: 0,
        }
    }

    /// How many directions came from the L-BFGS fallback.
    pub fn fallbacks_used(&self) -> usize {
        self.fallbacks_used
    }
}

impl DirectionProvider for StructuredNewton {
    fn initialize(&mut self, x0: &[f64], r0: &[f64]) {
        self.fallback.initialize(x0, r0);
    }

    fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        self.fallback.push(s, y)
    }

    fn direction(&mut self, input: &DirectionInput<'_>) -> Vec<f64> {
        if let (Some(h), Some(b)) = (input.hessian, input.bounds) {
            if let Ok(d) = structured_newton_box(
                input.x,
                input.residual,
                input.prox_point,
                input.grad_at_prox,
                h,
                b,
                input.gamma,
            ) {
                return d;
            }
        }
        self.fallbacks_used += 1;
        self.fallback.direction_for(input.residual)
    }

    fn reset(&mut self) {
        self.fallback.clear();
    }

    fn name(&self) -> &'static str {
        "structured-newton"
    }
}
