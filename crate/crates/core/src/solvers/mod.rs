//! Linesearch solvers: the prox-merit method (linesearch on
//! `psi_gamma = phi ∘ prox_{gamma g}`), the envelope-based ZeroFPR and PANOC
//! baselines, and plain proximal gradient.
//!
//! Counting convention: every solver evaluates the residual at the point it
//! returns, so a run of `K` completed iterations of the prox-merit method
//! spends `2K + 1` gradients.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::directions::DirectionProvider;
use crate::error::{check_dim, Error, Result};
use crate::fbstep::{FbParams, Merit};
use crate::oracles::{counted_oracle, CompositeProblem, Counted, EvalCounters, ProxOracle, SmoothOracle};

mod panoc;
mod panoc_plus;
mod pg;
mod zerofpr;

pub use panoc::panoc_solve;
pub use panoc_plus::panoc_plus_solve;
pub use pg::pg_solve;
pub use zerofpr::zerofpr_solve;

pub const DEFAULT_MAX_BACKTRACKS: usize = 40;
/// Directions are clipped to `DIRECTION_CAP · max(1, ||r||)`.
pub const DIRECTION_CAP: f64 = 1e3;
/// Relative rounding slack in the sufficient-decrease test.
pub const DECREASE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    PanocPlus,
    ZeroFpr,
    Panoc,
    Pg,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::PanocPlus, SolverKind::ZeroFpr, SolverKind::Panoc, SolverKind::Pg];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::PanocPlus => "panoc++",
            SolverKind::ZeroFpr => "zerofpr",
            SolverKind::Panoc => "panoc",
            SolverKind::Pg => "pg",
        }
    }

    pub fn merit(self) -> Merit {
        match self {
            SolverKind::PanocPlus | SolverKind::Pg => Merit::Psi,
            SolverKind::ZeroFpr | SolverKind::Panoc => Merit::Fbe,
        }
    }

    /// `gamma · L`: 1.95 for the prox-merit method and PG, 0.95 for the
    /// envelope baselines.
    pub fn default_gamma_factor(self) -> f64 {
        match self.merit() {
            Merit::Psi => 1.95,
            Merit::Fbe => 0.95,
        }
    }

    pub fn default_fb(self, lipschitz: f64) -> FbParams {
        FbParams::new(lipschitz, self.default_gamma_factor(), self.merit())
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "panoc++" | "panocplus" | "panoc-plus" | "panoc_plus" => Ok(SolverKind::PanocPlus),
            "zerofpr" => Ok(SolverKind::ZeroFpr),
            "panoc" => Ok(SolverKind::Panoc),
            "pg" => Ok(SolverKind::Pg),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    Off,
    /// Scalars per iteration.
    #[default]
    Scalars,
    /// Scalars plus iterate, forward point and direction.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveParams {
    pub fb: FbParams,
    /// Threshold on `||R^nat||∞`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub kind: SolverKind,
    pub cap_direction: bool,
    pub trace: TraceLevel,
}

impl SolveParams {
    pub fn new(kind: SolverKind, lipschitz: f64) -> Self {
        Self {
            fb: kind.default_fb(lipschitz),
            tol: 1e-6,
            max_iter: 1000,
            max_backtracks: DEFAULT_MAX_BACKTRACKS,
            kind,
            cap_direction: true,
            trace: TraceLevel::Scalars,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_trace(mut self, trace: TraceLevel) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_fb(mut self, fb: FbParams) -> Self {
        self.fb = fb;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_backtracks == 0 {
            return Err(Error::Config("max_backtracks must be at least 1".into()));
        }
        self.fb.validate(self.kind.merit())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFailed,
    Diverged,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::LineSearchFailed => "linesearch_failed",
            SolveStatus::Diverged => "diverged",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolveStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SolveStatus::Converged, SolveStatus::MaxIter, SolveStatus::LineSearchFailed, SolveStatus::Diverged]
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown status {s:?}")))
    }
}

/// One completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub gamma: f64,
    pub lipschitz: f64,
    pub sigma: f64,
    /// Accepted stepsize; 0 for the fallback step.
    pub tau: f64,
    /// Rejected candidates.
    pub backtracks: usize,
    pub fallback: bool,
    /// Adaptive `L` updates during this iteration.
    pub lipschitz_updates: usize,
    /// `||R^nat||²` at the iterate the iteration started from.
    pub r_nat_sq: f64,
    pub r_nat_inf: f64,
    /// Merit at the start and at the accepted point (`phi` at prox points
    /// for the prox-merit method and PG, the envelope for the baselines).
    pub merit: f64,
    pub merit_next: f64,
    pub counters: EvalCounters,
    pub x: Option<Vec<f64>>,
    pub x_bar: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_final: Vec<f64>,
    pub phi_final: f64,
    pub residual_inf: f64,
    pub iterations: usize,
    pub counters: EvalCounters,
    pub status: SolveStatus,
    pub trace: Vec<IterRecord>,
    /// Parameters after the last adaptive update.
    pub final_fb: FbParams,
    pub lipschitz_updates: usize,
    pub total_backtracks: usize,
    pub fallbacks: usize,
}

/// Dispatches on `params.kind`. PG ignores `provider`.
pub fn solve<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x0: &[f64],
    params: &SolveParams,
    provider: &mut dyn DirectionProvider,
) -> Result<SolveResult> {
    match params.kind {
        SolverKind::PanocPlus => panoc_plus_solve(problem, x0, params, provider),
        SolverKind::ZeroFpr => zerofpr_solve(problem, x0, params, provider),
        SolverKind::Panoc => panoc_solve(problem, x0, params, provider),
        SolverKind::Pg => pg_solve(problem, x0, params),
    }
}

/// `merit - sigma r_sq` plus the rounding slack.
pub(crate) fn decrease_target(merit: f64, sigma: f64, r_sq: f64) -> f64 {
    merit - sigma * r_sq + DECREASE_SLACK * merit.abs().max(1.0)
}

pub(crate) fn cap_direction(d: &mut [f64], r: &[f64]) {
    let cap = DIRECTION_CAP * crate::linalg::norm(r).max(1.0);
    let nd = crate::linalg::norm(d);
    if nd > cap {
        let s = cap / nd;
        d.iter_mut().for_each(|v| *v *= s);
    }
}

/// Shared bookkeeping of one run: counted oracles, timer, trace.
pub(crate) struct Run<'a, F, G> {
    pub p: CompositeProblem<Counted<'a, F>, Counted<'a, G>>,
    cell: &'a Cell<EvalCounters>,
    start: Instant,
    pub trace: Vec<IterRecord>,
    level: TraceLevel,
    mark: EvalCounters,
    pub lipschitz_updates: usize,
    pub total_backtracks: usize,
    pub fallbacks: usize,
}

impl<'a, F: SmoothOracle, G: ProxOracle> Run<'a, F, G> {
    pub fn new(
        problem: &'a CompositeProblem<F, G>,
        x0: &[f64],
        params: &SolveParams,
        cell: &'a Cell<EvalCounters>,
    ) -> Result<Self> {
        params.validate()?;
        check_dim(problem.smooth.dim(), problem.proximable.dim())?;
        check_dim(problem.smooth.dim(), x0.len())?;
        Ok(Self {
            p: counted_oracle(problem, cell),
            cell,
            start: Instant::now(),
            trace: Vec::new(),
            level: params.trace,
            mark: EvalCounters::default(),
            lipschitz_updates: 0,
            total_backtracks: 0,
            fallbacks: 0,
        })
    }

    /// Starts the per-iteration counter delta.
    pub fn begin_iteration(&mut self) {
        self.mark = self.cell.get();
    }

    pub fn full(&self) -> bool {
        self.level == TraceLevel::Full
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        k: usize,
        fb: &FbParams,
        tau: f64,
        backtracks: usize,
        fallback: bool,
        lipschitz_updates: usize,
        r_nat: &[f64],
        merit: f64,
        merit_next: f64,
        vectors: impl FnOnce() -> (Vec<f64>, Vec<f64>, Vec<f64>),
    ) {
        self.total_backtracks += backtracks;
        self.fallbacks += usize::from(fallback);
        if self.level == TraceLevel::Off {
            return;
        }
        let (x, x_bar, direction) = if self.full() {
            let (a, b, c) = vectors();
            (Some(a), Some(b), Some(c))
        } else {
            (None, None, None)
        };
        self.trace.push(IterRecord {
            k,
            gamma: fb.gamma,
            lipschitz: fb.lipschitz,
            sigma: fb.sigma,
            tau,
            backtracks,
            fallback,
            lipschitz_updates,
            r_nat_sq: crate::linalg::norm_sq(r_nat),
            r_nat_inf: crate::linalg::norm_inf(r_nat),
            merit,
            merit_next,
            counters: self.cell.get().since(&self.mark),
            x,
            x_bar,
            direction,
        });
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        x_final: Vec<f64>,
        phi_final: f64,
        residual_inf: f64,
        iterations: usize,
        status: SolveStatus,
        final_fb: FbParams,
    ) -> SolveResult {
        let mut counters = self.cell.get();
        counters.wall_time = self.start.elapsed();
        SolveResult {
            x_final,
            phi_final,
            residual_inf,
            iterations,
            counters,
            status,
            trace: self.trace,
            final_fb,
            lipschitz_updates: self.lipschitz_updates,
            total_backtracks: self.total_backtracks,
            fallbacks: self.fallbacks,
        }
    }
}

pub(crate) fn nonsmooth(updates: usize, fb: &FbParams) -> Error {
    Error::Nonsmooth {
        updates,
        lipschitz: fb.lipschitz,
    }
}
