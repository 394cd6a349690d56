//! Benchmark harness for the proxline solvers: solver/problem matrices,
//! closed-loop MPC runs, Dolan-Moré performance profiles and CSV/JSON
//! output.

pub mod config;
pub mod error;
pub mod matrix;
pub mod profile;
pub mod record;

pub use config::{default_seed, KeyValues, DEFAULT_SEED};
pub use error::{BenchError, Result};
pub use matrix::{run_matrix, run_mpc_closed_loop, BenchProblem, MpcStart, RunSettings};
pub use profile::{performance_profile, Metric, ProfileCurve};
pub use record::{RunRecord, RunStatus};
