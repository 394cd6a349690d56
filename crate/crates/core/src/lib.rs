//! Proximal-gradient linesearch solvers for composite problems
//! `minimize f(x) + g(x)` with smooth `f` and convex, proximable `g`.
//!
//! The main solver, [`solvers::panoc_plus_solve`], runs its linesearch on
//! the merit `psi_gamma = phi(prox_{gamma g}(.))`. It calls `f` and
//! `prox_{gamma g}` only while backtracking, so each iteration evaluates
//! exactly two gradients however many candidates are rejected. The crate
//! also provides the FBE-based baselines (ZeroFPR, PANOC), plain proximal
//! gradient, an augmented Lagrangian outer loop for box-constrained NLPs,
//! and problem front-ends for sparse logistic regression, single-shooting
//! optimal control and synthetic fixtures.

// `!(a > b)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alm;
pub mod directions;
pub mod error;
pub mod fbstep;
pub mod linalg;
pub mod oracles;
pub mod problems;
pub mod solvers;

pub use alm::{alm_inner_problem, alm_solve, AlmConfig, AlmResult, AlmStatus, NlpProblem};
pub use directions::{DirectionKind, DirectionProvider, Lbfgs, StructuredNewton, ZeroDirection};
pub use error::{Error, Result};
pub use fbstep::{FbParams, FbState};
pub use oracles::{
    BoxSet, CompositeProblem, EvalCounters, L1Norm, ProxOracle, SmoothOracle, ZeroFunction,
};
pub use solvers::{
    solve, IterRecord, SolveParams, SolveResult, SolveStatus, SolverKind,
};
