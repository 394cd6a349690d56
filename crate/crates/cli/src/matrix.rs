use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proxline::problems::{
    logistic_oracle, make_bicycle_mpc, make_box_qp, make_lasso, make_synthetic_logistic, ocp_single_shooting,
    BicycleConfig, BoxQpInstance, LassoInstance, LogisticProblem, OcpModel,
};
use proxline::solvers::TraceLevel;
use proxline::{
    alm_solve, solve, AlmConfig, CompositeProblem, DirectionKind, ProxOracle, SmoothOracle, SolveParams, SolveResult,
    SolverKind,
};
use rayon::prelude::*;

use crate::error::{BenchError, Result};
use crate::record::{sort_records, RunRecord};

/// Feature density of the synthetic logistic generator used by the CLI.
pub const SYNTHETIC_DENSITY: f64 = 0.1;
/// Regularization grid as multiples of `λ_max`.
pub const LAMBDA_GRID: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];
pub const MEMORY_MPC: usize = 50;
pub const MEMORY_LOGISTIC: usize = 5;
pub const MEMORY_SYNTHETIC: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// Threshold on `||R^nat||∞` for composite problems.
    pub tol: f64,
    /// Iteration limit of each (inner) solve.
    pub max_iter: usize,
    /// L-BFGS memory.
    pub memory: usize,
    /// Primal and dual ALM tolerance for MPC problems.
    pub alm_tol: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            memory: MEMORY_LOGISTIC,
            alm_tol: 1e-4,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.alm_tol > 0.0) {
            return Err(BenchError::config("tolerances must be positive"));
        }
        if self.memory == 0 {
            return Err(BenchError::config("L-BFGS memory must be at least 1"));
        }
        Ok(())
    }

    fn hash_for(&self, problem: &str, solver: SolverKind) -> u64 {
        let mut h = DefaultHasher::new();
        problem.hash(&mut h);
        solver.name().hash(&mut h);
        format!("{self:?}").hash(&mut h);
        h.finish()
    }
}

/// A problem in a benchmark matrix. Every run builds fresh oracles, so
/// counters never leak between runs.
#[derive(Debug, Clone)]
pub enum BenchProblem {
    Logistic { id: String, problem: LogisticProblem },
    BoxQp { id: String, instance: BoxQpInstance },
    Lasso { id: String, instance: LassoInstance },
    /// One open-loop optimal control solve by ALM from `u0` (zeros if absent).
    Mpc { id: String, config: BicycleConfig, u0: Option<Vec<f64>> },
}

impl BenchProblem {
    pub fn id(&self) -> &str {
        match self {
            BenchProblem::Logistic { id, .. }
            | BenchProblem::BoxQp { id, .. }
            | BenchProblem::Lasso { id, .. }
            | BenchProblem::Mpc { id, .. } => id,
        }
    }

    /// Synthetic logistic regression with `m` samples, `n` features and
    /// `λ = lambda_ratio · λ_max`.
    pub fn synthetic_logistic(m: usize, n: usize, lambda_ratio: f64, seed: u64) -> Result<Self> {
        let (a, b) = make_synthetic_logistic(m, n, SYNTHETIC_DENSITY, seed);
        let mut problem = LogisticProblem::new(a, b, 0.0)?;
        problem.lambda = lambda_ratio * problem.lambda_max();
        Ok(BenchProblem::Logistic {
            id: format!("logistic-{m}x{n}-s{seed}@{lambda_ratio}"),
            problem,
        })
    }

    pub fn box_qp(n: usize, seed: u64) -> Result<Self> {
        Ok(BenchProblem::BoxQp {
            id: format!("boxqp-{n}-s{seed}"),
            instance: make_box_qp(n, seed, 0.3)?,
        })
    }

    pub fn lasso(m: usize, n: usize, lambda_ratio: f64, seed: u64) -> Result<Self> {
        Ok(BenchProblem::Lasso {
            id: format!("lasso-{m}x{n}-s{seed}@{lambda_ratio}"),
            instance: make_lasso(m, n, lambda_ratio, seed)?,
        })
    }

    /// Runs one solver and records its counters.
    pub fn run(&self, solver: SolverKind, settings: &RunSettings) -> proxline::Result<RunRecord> {
        let hash = settings.hash_for(self.id(), solver);
        let mut rec = RunRecord::failed(self.id(), solver.name(), hash);
        match self {
            BenchProblem::Logistic { problem, .. } => {
                let p = logistic_oracle(problem);
                fill_composite(&mut rec, &p, problem.lipschitz_estimate(), solver, settings)?;
            }
            BenchProblem::BoxQp { instance, .. } => {
                fill_composite(&mut rec, &instance.problem(), instance.lipschitz, solver, settings)?;
            }
            BenchProblem::Lasso { instance, .. } => {
                fill_composite(&mut rec, &instance.problem(), instance.lipschitz, solver, settings)?;
            }
            BenchProblem::Mpc { config, u0, .. } => {
                solve_mpc(&mut rec, config, u0.as_deref(), solver, settings)?;
            }
        }
        Ok(rec)
    }
}

fn fill_composite<F: SmoothOracle, G: ProxOracle>(
    rec: &mut RunRecord,
    p: &CompositeProblem<F, G>,
    lipschitz: f64,
    solver: SolverKind,
    s: &RunSettings,
) -> proxline::Result<SolveResult> {
    let params = SolveParams::new(solver, lipschitz)
        .with_tol(s.tol)
        .with_max_iter(s.max_iter)
        .with_trace(TraceLevel::Off);
    let mut provider = DirectionKind::Lbfgs { memory: s.memory }.build();
    let start = Instant::now();
    let res = solve(p, &vec![0.0; p.dim()], &params, provider.as_mut())?;
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    rec.status = res.status.into();
    rec.iters = res.iterations as u64;
    rec.n_f = res.counters.n_f;
    rec.n_grad = res.counters.n_grad;
    rec.n_prox = res.counters.n_prox;
    rec.n_matvec = res.counters.n_matvec;
    rec.resid_inf = res.residual_inf;
    rec.phi = res.phi_final;
    Ok(res)
}

fn alm_config(solver: SolverKind, s: &RunSettings) -> AlmConfig {
    AlmConfig {
        inner: solver,
        direction: DirectionKind::Lbfgs { memory: s.memory },
        eps: s.alm_tol,
        delta: s.alm_tol,
        inner_max_iter: s.max_iter,
        ..AlmConfig::default()
    }
}

/// Returns the computed inputs. `iters` sums the inner iterations and
/// `resid_inf` is the larger of the two ALM criteria.
fn solve_mpc(
    rec: &mut RunRecord,
    config: &BicycleConfig,
    u0: Option<&[f64]>,
    solver: SolverKind,
    s: &RunSettings,
) -> proxline::Result<Vec<f64>> {
    let nlp = ocp_single_shooting(make_bicycle_mpc(config)?)?;
    let zeros = vec![0.0; nlp.dim()];
    let start = Instant::now();
    let res = alm_solve(&nlp, u0.unwrap_or(&zeros), &alm_config(solver, s))?;
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    rec.status = res.status.into();
    rec.iters = res.trace.iter().map(|t| t.inner_iterations as u64).sum();
    rec.n_f = res.counters.n_f;
    rec.n_grad = res.counters.n_grad;
    rec.n_prox = res.counters.n_prox;
    rec.n_matvec = res.counters.n_matvec;
    rec.resid_inf = res.primal_residual.max(res.dual_residual);
    rec.phi = nlp.cost.eval_f(&res.u);
    Ok(res.u)
}

/// Runs `f` and turns an error or a panic into an `Error` record.
fn guarded(problem: &str, solver: SolverKind, hash: u64, f: impl FnOnce() -> proxline::Result<RunRecord>) -> RunRecord {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(rec)) => rec,
        Ok(Err(_)) | Err(_) => RunRecord::failed(problem, solver.name(), hash),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::config(format!("thread pool: {e}")))
}

/// Every (problem, solver) pair, at most `jobs` at a time (`0` lets rayon
/// choose). Records come back sorted by (problem, solver).
pub fn run_matrix(
    problems: &[BenchProblem],
    solvers: &[SolverKind],
    settings: &RunSettings,
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    if problems.is_empty() || solvers.is_empty() {
        return Err(BenchError::config("the matrix needs at least one problem and one solver"));
    }
    settings.validate()?;
    let pairs: Vec<(&BenchProblem, SolverKind)> =
        problems.iter().flat_map(|p| solvers.iter().map(move |&s| (p, s))).collect();
    let mut records: Vec<RunRecord> = pool(jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|&(p, s)| guarded(p.id(), s, settings.hash_for(p.id(), s), || p.run(s, settings)))
            .collect()
    });
    sort_records(&mut records);
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpcStart {
    /// Every solve starts from zero inputs.
    Cold,
    /// From the second step on, start from the previous solution shifted by
    /// one stage with its last input repeated.
    Warm,
}

/// Drops the first `nu` inputs and repeats the last stage.
pub fn shift_inputs(u: &[f64], nu: usize) -> Vec<f64> {
    let mut out = u[nu..].to_vec();
    out.extend_from_slice(&u[u.len() - nu..]);
    out
}

/// Closed loop over `steps` sampling times: solve from the current state,
/// apply the first input to the model, repeat. One record per step, with
/// problem id `"{id}/step{k:03}"`. A failed step leaves the previous
/// (shifted) guess in place so the loop can continue.
pub fn run_mpc_closed_loop(
    id: &str,
    config: &BicycleConfig,
    solver: SolverKind,
    settings: &RunSettings,
    steps: usize,
    start: MpcStart,
) -> Vec<RunRecord> {
    let model = config.model();
    let nu = model.nu();
    let mut cfg = config.clone();
    let mut z = config.initial_state();
    let mut guess = vec![0.0; nu * config.horizon];
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        cfg.z0 = Some(z);
        let step_id = format!("{id}/step{k:03}");
        let hash = settings.hash_for(&step_id, solver);
        let u0 = match start {
            MpcStart::Warm => guess.clone(),
            MpcStart::Cold => vec![0.0; guess.len()],
        };
        let mut solution = None;
        let rec = guarded(&step_id, solver, hash, || {
            let mut rec = RunRecord::failed(&step_id, solver.name(), hash);
            solution = Some(solve_mpc(&mut rec, &cfg, Some(&u0), solver, settings)?);
            Ok(rec)
        });
        records.push(rec);
        let u = solution.unwrap_or(u0);
        let mut next = [0.0; 4];
        model.step(&z, &u[..nu], &mut next);
        z = next;
        guess = shift_inputs(&u, nu);
    }
    records
}

/// Closed loops for several solvers in parallel; records sorted.
pub fn run_mpc_matrix(
    id: &str,
    config: &BicycleConfig,
    solvers: &[SolverKind],
    settings: &RunSettings,
    steps: usize,
    start: MpcStart,
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    if solvers.is_empty() || steps == 0 {
        return Err(BenchError::config("MPC runs need at least one solver and one step"));
    }
    settings.validate()?;
    make_bicycle_mpc(config)?;
    let mut records: Vec<RunRecord> = pool(jobs)?.install(|| {
        solvers
            .par_iter()
            .flat_map_iter(|&s| run_mpc_closed_loop(id, config, s, settings, steps, start))
            .collect()
    });
    sort_records(&mut records);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RunStatus;

    #[test]
    fn shift_repeats_the_last_stage() {
        assert_eq!(shift_inputs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2), vec![3.0, 4.0, 5.0, 6.0, 5.0, 6.0]);
    }

    #[test]
    fn two_problems_three_solvers_give_six_sorted_records() {
        let problems = vec![BenchProblem::box_qp(5, 2).unwrap(), BenchProblem::lasso(12, 8, 0.1, 1).unwrap()];
        let solvers = [SolverKind::Pg, SolverKind::PanocPlus, SolverKind::ZeroFpr];
        let recs = run_matrix(&problems, &solvers, &RunSettings::default(), 2).unwrap();
        assert_eq!(recs.len(), 6);
        let keys: Vec<(&str, &str)> = recs.iter().map(|r| (r.problem.as_str(), r.solver.as_str())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(recs.iter().all(|r| r.status == RunStatus::Converged));
    }

    #[test]
    fn empty_matrix_is_a_configuration_error() {
        let p = vec![BenchProblem::box_qp(3, 0).unwrap()];
        assert!(run_matrix(&p, &[], &RunSettings::default(), 1).is_err());
        assert!(run_matrix(&[], &[SolverKind::Pg], &RunSettings::default(), 1).is_err());
    }

    #[test]
    fn solver_errors_become_records() {
        let mut broken = BenchProblem::box_qp(3, 0).unwrap();
        if let BenchProblem::BoxQp { instance, .. } = &mut broken {
            instance.lipschitz = f64::NAN;
        }
        let recs = run_matrix(&[broken], &[SolverKind::PanocPlus], &RunSettings::default(), 1).unwrap();
        assert_eq!(recs[0].status, RunStatus::Error);
        assert!(recs[0].phi.is_nan());
    }
}
