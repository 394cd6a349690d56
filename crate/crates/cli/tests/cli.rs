use std::process::Command;

use proxline::problems::{make_bicycle_mpc, ocp_single_shooting, BicycleConfig, OcpModel};
use proxline::{alm_solve, AlmConfig, DirectionKind, SolverKind};
use proxline_bench::matrix::{run_mpc_closed_loop, shift_inputs};
use proxline_bench::profile::performance_ratios;
use proxline_bench::record::load_records;
use proxline_bench::{performance_profile, run_matrix, BenchProblem, Metric, MpcStart, RunRecord, RunSettings, RunStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn proxline() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_proxline"));
    c.env_remove("BENCH_SEED");
    c
}

fn without_timing(records: &[RunRecord]) -> Vec<RunRecord> {
    records.iter().cloned().map(|mut r| { r.wall_ms = 0.0; r }).collect()
}

#[test]
fn synthetic_bench_then_profile() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    let status = proxline()
        .args(["bench", "synthetic", "--n", "30", "--instances", "3", "--seed", "5", "--solvers", "panoc++,pg"])
        .arg("--out")
        .arg(&runs)
        .status()
        .unwrap();
    assert!(status.success());
    let records = load_records(&runs).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.windows(2).all(|w| (&w[0].problem, &w[0].solver) <= (&w[1].problem, &w[1].solver)));

    let prof = dir.path().join("profile.csv");
    let out = proxline().args(["profile", "--metric", "matvec", "--in"]).arg(&runs).arg("--out").arg(&prof).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&prof).unwrap();
    assert!(text.starts_with("solver,tau,rho\n"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("panoc++,") || l.starts_with("pg,")));
}

#[test]
fn json_output_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.json");
    let status = proxline().args(["solve", "--problem", "lasso", "--solver", "zerofpr", "--n", "12"]).arg("--out").arg(&runs).status().unwrap();
    assert!(status.success());
    let records = load_records(&runs).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].solver, "zerofpr");
    assert_eq!(records[0].status, RunStatus::Converged);
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "instances = 2\nno_such_key = 1\n").unwrap();
    let out = proxline().args(["bench", "synthetic", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = proxline().args(["solve", "--solver", "newton"]).output().unwrap();
    assert!(!out.status.success());
    let out = proxline().args(["profile", "--metric", "speed", "--in", "missing.csv"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn failed_runs_still_exit_zero() {
    // one iteration is never enough, but every run executes
    let out = proxline().args(["bench", "synthetic", "--kind", "boxqp", "--n", "10", "--instances", "2", "--max-iter", "1"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.contains(",max_iter,"));
}

#[test]
fn config_file_replaces_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "kind = lasso\nn = 10\ninstances = 2\nseed = 9\nsolvers = pg\nmax-iter = 5000\n").unwrap();
    let from_file = proxline().args(["bench", "synthetic", "--config"]).arg(&cfg).output().unwrap();
    assert!(from_file.status.success());
    let text = String::from_utf8(from_file.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("lasso-15x10-s9@0.1,pg,"));
    assert!(text.contains("lasso-15x10-s10@0.1,pg,"));

    let overridden = proxline().args(["bench", "synthetic", "--seed", "1", "--config"]).arg(&cfg).output().unwrap();
    let text = String::from_utf8(overridden.stdout).unwrap();
    assert!(text.contains("-s1@") && !text.contains("-s9@"));
}

#[test]
fn bench_seed_environment_variable_sets_the_default_seed() {
    let out = proxline()
        .env("BENCH_SEED", "77")
        .args(["bench", "synthetic", "--kind", "boxqp", "--n", "5", "--instances", "1", "--solvers", "pg"])
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("boxqp-5-s77,pg,"));
    let out = proxline().env("BENCH_SEED", "soon").args(["bench", "synthetic", "--instances", "1"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn identical_seeds_give_identical_records() {
    let problems: Vec<BenchProblem> = (0..3).map(|i| BenchProblem::synthetic_logistic(60, 20, 0.05, i).unwrap()).collect();
    let a = run_matrix(&problems, &SolverKind::ALL, &RunSettings::default(), 3).unwrap();
    let b = run_matrix(&problems, &SolverKind::ALL, &RunSettings::default(), 1).unwrap();
    let (a, b) = (without_timing(&a), without_timing(&b));
    assert_eq!(a.len(), 12);
    for (x, y) in a.iter().zip(&b) {
        assert!(x.same_fields(y), "{x:?} vs {y:?}");
        assert_eq!(x.config_hash, y.config_hash);
    }
}

/// `rho_s(tau)` recounted from the ratio multiset at every breakpoint and
/// between breakpoints.
#[test]
fn profile_steps_match_a_brute_force_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n_problems = rng.random_range(1..8);
        let n_solvers = rng.random_range(1..4);
        let mut records = Vec::new();
        for p in 0..n_problems {
            for s in 0..n_solvers {
                let mut r = RunRecord::failed(&format!("p{p}"), &format!("s{s}"), 0);
                r.status = if rng.random::<f64>() < 0.8 { RunStatus::Converged } else { RunStatus::MaxIter };
                r.n_matvec = rng.random_range(1..6);
                records.push(r);
            }
        }
        let Ok(curves) = performance_profile(&records, Metric::Matvec) else {
            assert!(records.iter().all(|r| !r.status.converged()));
            continue;
        };
        let ratios = performance_ratios(&records, Metric::Matvec).unwrap();
        for c in &curves {
            let rs = &ratios[&c.solver];
            let recount = |tau: f64| rs.iter().filter(|&&r| r <= tau).count() as f64 / rs.len() as f64;
            let mut taus: Vec<f64> = rs.iter().copied().filter(|r| r.is_finite()).collect();
            taus.push(1.0);
            taus.sort_by(f64::total_cmp);
            taus.dedup();
            let expected: Vec<(f64, f64)> = taus.iter().map(|&t| (t, recount(t))).collect();
            assert_eq!(c.points, expected);
            for w in c.points.windows(2) {
                assert!(w[0].1 <= w[1].1);
                let mid = 0.5 * (w[0].0 + w[1].0);
                assert_eq!(c.rho(mid), recount(mid));
            }
            assert_eq!(c.rho(f64::INFINITY), recount(f64::MAX));
        }
    }
}

#[test]
fn closed_loop_mpc_produces_one_record_per_step() {
    let cfg = BicycleConfig { horizon: 12, ..BicycleConfig::default() };
    let settings = RunSettings { memory: 10, ..RunSettings::default() };
    let warm = run_mpc_closed_loop("bike", &cfg, SolverKind::PanocPlus, &settings, 4, MpcStart::Warm);
    let cold = run_mpc_closed_loop("bike", &cfg, SolverKind::PanocPlus, &settings, 4, MpcStart::Cold);
    assert_eq!(warm.len(), 4);
    assert_eq!(warm[2].problem, "bike/step002");
    assert!(warm.iter().chain(&cold).all(|r| r.status == RunStatus::Converged));
    // the first solve has nothing to warm-start from
    assert!(warm[0].same_fields(&RunRecord { wall_ms: warm[0].wall_ms, ..cold[0].clone() }));

    // step 1 of the warm loop is the solve from the shifted step-0 solution
    let nlp = ocp_single_shooting(make_bicycle_mpc(&cfg).unwrap()).unwrap();
    let alm = AlmConfig {
        direction: DirectionKind::Lbfgs { memory: 10 },
        ..AlmConfig::default()
    };
    let u = alm_solve(&nlp, &vec![0.0; nlp.dim()], &alm).unwrap().u;
    let mut z1 = [0.0; 4];
    cfg.model().step(&cfg.initial_state(), &u[..2], &mut z1);
    let replay = BenchProblem::Mpc {
        id: "bike/step001".into(),
        config: BicycleConfig { z0: Some(z1), ..cfg.clone() },
        u0: Some(shift_inputs(&u, 2)),
    };
    let direct = replay.run(SolverKind::PanocPlus, &settings).unwrap();
    assert!(direct.same_fields(&RunRecord { wall_ms: direct.wall_ms, ..warm[1].clone() }), "{direct:?} vs {:?}", warm[1]);
    assert_eq!(shift_inputs(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 4.0, 3.0, 4.0]);
}

#[test]
fn mpc_verb_reads_the_bicycle_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bike.cfg");
    std::fs::write(&cfg, "horizon = 10\nhalf_width = 0.4\nsolvers = panoc++\nsteps = 2\n").unwrap();
    let out = proxline().args(["bench", "mpc", "--cold", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("bicycle-cold/step001,panoc++,"));
}
