mod common;

use nalgebra::DMatrix;
use proxline::fbstep::{normal_residual_at, FbParams, Merit};
use proxline::linalg::{dist, norm, norm_inf};
use proxline::oracles::{prox_l1, CompositeProblem, ProxOracle, SmoothOracle};
use proxline::problems::QuadraticFn;
use proxline::solvers::{panoc_plus_solve, pg_solve, zerofpr_solve, TraceLevel};
use proxline::{
    solve, BoxSet, DirectionKind, L1Norm, SolveParams, SolveResult, SolveStatus, SolverKind, ZeroDirection, ZeroFunction,
};

fn run<F: SmoothOracle, G: ProxOracle>(
    p: &CompositeProblem<F, G>,
    x0: &[f64],
    params: &SolveParams,
    dir: DirectionKind,
) -> SolveResult {
    let mut provider = dir.build();
    solve(p, x0, params, provider.as_mut()).unwrap()
}

fn shifted_square() -> CompositeProblem<QuadraticFn, ZeroFunction> {
    // ½(x - 1)² up to a constant
    CompositeProblem::new(QuadraticFn::diagonal(vec![1.0], vec![-1.0]), ZeroFunction::new(1)).unwrap()
}

fn fixed(kind: SolverKind, lipschitz: f64, factor: f64) -> SolveParams {
    SolveParams::new(kind, lipschitz)
        .with_fb(FbParams::new(lipschitz, factor, kind.merit()).with_adaptive(false))
        .with_trace(TraceLevel::Full)
}

fn iterates(r: &SolveResult) -> Vec<Vec<f64>> {
    r.trace.iter().map(|t| t.x.clone().unwrap()).collect()
}

#[test]
fn zero_direction_follows_the_pg_recursion() {
    let p = shifted_square();
    let params = fixed(SolverKind::PanocPlus, 1.0, 1.95).with_max_iter(30);
    let mut zero = ZeroDirection;
    let r = panoc_plus_solve(&p, &[0.0], &params, &mut zero).unwrap();
    let xs = iterates(&r);
    assert_eq!(xs[0], vec![0.0]);
    assert!((xs[1][0] - 1.95).abs() < 1e-15);
    let mut x = 0.0;
    for xk in &xs {
        assert!((xk[0] - x).abs() < 1e-12);
        x -= 1.95 * (x - 1.0);
    }
}

#[test]
fn bound_constrained_scalar_converges_to_the_bound() {
    let p = CompositeProblem::new(QuadraticFn::diagonal(vec![1.0], vec![-2.0]), BoxSet::uniform(1, -1.0, 1.0).unwrap())
        .unwrap();
    for dir in [DirectionKind::Lbfgs { memory: 5 }, DirectionKind::Zero, DirectionKind::StructuredNewton { memory: 5 }] {
        let params = SolveParams::new(SolverKind::PanocPlus, 1.0).with_tol(1e-8);
        let r = run(&p, &[0.0], &params, dir);
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.x_final, vec![1.0]);
        assert_eq!(r.residual_inf, 0.0);
    }
}

#[test]
fn unit_steps_and_shrinking_error_ratios_on_box_qp() {
    let inst = common::box_qp(20, 3);
    let p = inst.problem();
    let params = fixed(SolverKind::PanocPlus, inst.lipschitz, 1.95).with_tol(1e-10);
    let r = run(&p, &[0.0; 20], &params, DirectionKind::Lbfgs { memory: 10 });
    assert_eq!(r.status, SolveStatus::Converged);
    let k = r.trace.len();
    assert!(r.trace[k - 10..].iter().all(|t| t.tau == 1.0), "unit step rejected late in the run");
    let mut errs: Vec<f64> = iterates(&r).iter().map(|x| dist(x, &inst.x_star)).collect();
    errs.push(dist(&r.x_final, &inst.x_star));
    // limited-memory directions speed up the contraction without making it
    // monotone; compare average rates over the first and last ten steps
    let m = errs.len() - 1;
    let rate = |a: usize, b: usize| (errs[b] / errs[a]).powf(1.0 / (b - a) as f64);
    assert!(rate(m - 10, m) < rate(0, 10), "{errs:?}");
}

#[test]
fn gradient_budget_is_two_per_iteration() {
    let (p, l) = common::logistic(200, 50, 0.05, 7);
    let adaptive = SolveParams::new(SolverKind::PanocPlus, l / 64.0);
    for params in [SolveParams::new(SolverKind::PanocPlus, l), adaptive] {
        let r = run(&p, &vec![0.0; 50], &params, DirectionKind::Lbfgs { memory: 5 });
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.trace.iter().all(|t| t.counters.n_grad == 2));
        // one more gradient for the residual test that stops the run
        assert_eq!(r.counters.n_grad, 2 * r.iterations as u64 + 1);
        assert!(r.total_backtracks > 0 || r.lipschitz_updates > 0);
        let backtracks: usize = r.trace.iter().map(|t| t.backtracks).sum();
        let extra_f: u64 = r.trace.iter().map(|t| t.counters.n_f - 1 - t.backtracks as u64).sum();
        assert_eq!(backtracks, r.total_backtracks);
        assert!(extra_f as usize >= r.lipschitz_updates);
    }
}

#[test]
fn zerofpr_pays_a_gradient_per_candidate() {
    let (p, l) = common::logistic(200, 50, 0.05, 7);
    let params = SolveParams::new(SolverKind::ZeroFpr, l);
    let r = run(&p, &vec![0.0; 50], &params, DirectionKind::Lbfgs { memory: 5 });
    assert_eq!(r.status, SolveStatus::Converged);
    for t in &r.trace {
        let expected = if t.fallback { 1 + t.backtracks } else { 2 + t.backtracks };
        assert_eq!(t.counters.n_grad, expected as u64);
    }
    let expected = 1 + 2 * r.iterations + r.total_backtracks - r.fallbacks;
    assert_eq!(r.counters.n_grad, expected as u64);
}

#[test]
fn zerofpr_with_zero_direction_matches_pg() {
    let p = CompositeProblem::new(QuadraticFn::diagonal(vec![1.0, 0.5, 0.2], vec![1.0, -1.0, 0.3]), ZeroFunction::new(3))
        .unwrap();
    let x0 = [3.0, -2.0, 1.0];
    let zf = zerofpr_solve(&p, &x0, &fixed(SolverKind::ZeroFpr, 1.0, 0.5).with_max_iter(40), &mut ZeroDirection).unwrap();
    let pg = pg_solve(&p, &x0, &fixed(SolverKind::Pg, 1.0, 0.5).with_max_iter(40)).unwrap();
    let (a, b) = (iterates(&zf), iterates(&pg));
    assert_eq!(a.len(), b.len());
    for (u, v) in a.iter().zip(&b) {
        assert!(dist(u, v) <= 1e-14);
    }
}

#[test]
fn fixed_point_starts_stop_immediately() {
    let inst = common::box_qp(8, 1);
    let p = inst.problem();
    for kind in SolverKind::ALL {
        let params = SolveParams::new(kind, inst.lipschitz).with_tol(1e-9);
        let r = run(&p, &inst.x_star, &params, DirectionKind::Lbfgs { memory: 5 });
        assert_eq!(r.status, SolveStatus::Converged, "{kind}");
        assert_eq!(r.iterations, 0, "{kind}");
        assert_eq!(r.counters.n_grad, 1, "{kind}");
        assert_eq!(r.counters.n_prox, if kind == SolverKind::Pg || kind == SolverKind::PanocPlus { 2 } else { 1 });
    }
}

#[test]
fn pg_examples() {
    let p = shifted_square();
    let r = pg_solve(&p, &[0.0], &fixed(SolverKind::Pg, 1.0, 1.0)).unwrap();
    assert_eq!((r.status, r.iterations), (SolveStatus::Converged, 1));
    assert_eq!(r.x_final, vec![1.0]);

    let r = pg_solve(&p, &[0.0], &fixed(SolverKind::Pg, 1.0, 1.95).with_max_iter(50)).unwrap();
    for (k, x) in iterates(&r).iter().enumerate() {
        assert!(((x[0] - 1.0).abs() - 0.95f64.powi(k as i32)).abs() < 1e-12);
    }
}

#[test]
fn pg_on_lasso_is_the_soft_threshold_iteration() {
    let inst = proxline::problems::make_lasso(15, 10, 0.2, 9).unwrap();
    let p = inst.problem();
    let gamma = 1.0 / inst.lipschitz;
    let params = fixed(SolverKind::Pg, inst.lipschitz, 1.0).with_max_iter(25);
    let r = pg_solve(&p, &[0.0; 10], &params).unwrap();
    let mut x = vec![0.0; 10];
    for xk in iterates(&r) {
        assert!(dist(&xk, &x) <= 1e-13);
        let mut g = vec![0.0; 10];
        p.smooth.eval_grad(&x, &mut g);
        let z: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - gamma * b).collect();
        x = prox_l1(&z, gamma * inst.l1.lambda).0;
    }
}

#[test]
fn zero_direction_reproduces_pg_iterates() {
    for seed in 0..3 {
        let inst = proxline::problems::make_lasso(40, 60, 0.02, seed).unwrap();
        let p = inst.problem();
        let params = SolveParams::new(SolverKind::PanocPlus, inst.lipschitz / 4.0)
            .with_tol(1e-300)
            .with_max_iter(100)
            .with_trace(TraceLevel::Full);
        let x0: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = panoc_plus_solve(&p, &x0, &params, &mut ZeroDirection).unwrap();
        let pg_params = SolveParams { kind: SolverKind::Pg, ..params.clone() };
        let b = pg_solve(&p, &x0, &pg_params).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.lipschitz_updates, b.lipschitz_updates);
        for (u, v) in iterates(&a).iter().zip(&iterates(&b)) {
            assert_eq!(u, v);
        }
        assert_eq!(a.x_final, b.x_final);
    }
}

#[test]
fn accepted_steps_satisfy_sufficient_decrease() {
    let (p, l) = common::logistic(200, 50, 0.05, 11);
    for kind in SolverKind::ALL {
        let params = SolveParams::new(kind, l / 16.0);
        let r = run(&p, &vec![0.0; 50], &params, DirectionKind::Lbfgs { memory: 5 });
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.residual_inf <= params.tol);
        for t in &r.trace {
            let slack = 1e-12 * t.merit.abs().max(1.0);
            assert!(t.merit_next - t.merit <= -t.sigma * t.r_nat_sq + slack, "{kind} iteration {}", t.k);
            assert!(t.sigma > 0.0 && t.sigma < kind.merit().sigma_bound(t.gamma, t.lipschitz));
        }
    }
}

#[test]
fn residual_sum_is_bounded_by_the_initial_gap() {
    for seed in 0..4 {
        let inst = common::box_qp(15, seed);
        let p = inst.problem();
        let params = fixed(SolverKind::PanocPlus, inst.lipschitz, 1.95).with_tol(1e-9);
        let x0 = vec![0.5; 15];
        let r = run(&p, &x0, &params, DirectionKind::Lbfgs { memory: 10 });
        let phi0 = r.trace[0].merit;
        let sum: f64 = r.trace.iter().map(|t| t.r_nat_sq).sum();
        assert!(sum <= (phi0 - inst.phi_star()) / params.fb.sigma * (1.0 + 1e-9));
    }
}

#[test]
fn identical_inputs_give_identical_traces() {
    let (p, l) = common::logistic(100, 30, 0.05, 2);
    let params = SolveParams::new(SolverKind::PanocPlus, l).with_trace(TraceLevel::Full);
    let a = run(&p, &vec![0.0; 30], &params, DirectionKind::Lbfgs { memory: 5 });
    let b = run(&p, &vec![0.0; 30], &params, DirectionKind::Lbfgs { memory: 5 });
    let strip = |r: &SolveResult| {
        r.trace
            .iter()
            .map(|t| (t.x.clone(), t.tau, t.backtracks, t.merit.to_bits(), t.counters.n_grad))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.x_final, b.x_final);
}

#[test]
fn baselines_converge_on_the_convex_suite() {
    for seed in 0..3 {
        let inst = common::box_qp(20, seed);
        let la = proxline::problems::make_lasso(40, 60, 0.1, seed).unwrap();
        for kind in SolverKind::ALL {
            let params = SolveParams::new(kind, inst.lipschitz).with_max_iter(5000);
            let r = run(&inst.problem(), &[0.0; 20], &params, DirectionKind::Lbfgs { memory: 10 });
            assert_eq!(r.status, SolveStatus::Converged, "{kind} box-qp {seed}");
            assert!(dist(&r.x_final, &inst.x_star) <= 1e-4, "{kind}");
            let params = SolveParams::new(kind, la.lipschitz).with_max_iter(5000);
            let r = run(&la.problem(), &vec![0.0; 60], &params, DirectionKind::Zero);
            assert_eq!(r.status, SolveStatus::Converged, "{kind} lasso {seed}");
        }
    }
}

#[test]
fn large_stepsize_converges_on_quadratic_families() {
    for seed in 0..5 {
        let inst = common::box_qp(30, seed);
        let params = fixed(SolverKind::PanocPlus, inst.lipschitz, 1.95).with_trace(TraceLevel::Off);
        let r = run(&inst.problem(), &vec![0.0; 30], &params, DirectionKind::Lbfgs { memory: 10 });
        assert_eq!(r.status, SolveStatus::Converged);
        let la = proxline::problems::make_lasso(50, 80, 0.1, seed).unwrap();
        let params = fixed(SolverKind::PanocPlus, la.lipschitz, 1.95).with_trace(TraceLevel::Off);
        let r = run(&la.problem(), &vec![0.0; 80], &params, DirectionKind::Lbfgs { memory: 10 });
        assert_eq!(r.status, SolveStatus::Converged);
    }
}

#[test]
fn adaptive_rule_settles_after_the_first_accepted_bound() {
    let inst = common::box_qp(20, 5);
    let (lo, l) = common::logistic(200, 50, 0.05, 3);
    let qp_run = run(&inst.problem(), &[0.0; 20], &SolveParams::new(SolverKind::PanocPlus, inst.lipschitz / 64.0), DirectionKind::Lbfgs { memory: 10 });
    let lo_run = run(&lo, &vec![0.0; 50], &SolveParams::new(SolverKind::PanocPlus, l / 64.0), DirectionKind::Lbfgs { memory: 5 });
    for r in [qp_run, lo_run] {
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.lipschitz_updates <= 7);
        let updates: Vec<usize> = r.trace.iter().map(|t| t.lipschitz_updates).collect();
        let first_quiet = updates.iter().position(|&u| u == 0).unwrap();
        assert!(updates[first_quiet..].iter().all(|&u| u == 0), "{updates:?}");
        assert!(r.final_fb.validate(Merit::Psi).is_ok());
    }
}

#[test]
fn zero_regularization_threshold_gives_zero_solution() {
    for seed in 0..3 {
        let (a, b) = proxline::problems::make_synthetic_logistic(80, 20, 0.3, seed);
        let lam = proxline::problems::lambda_max(&a, &b);
        let prob = proxline::problems::LogisticProblem::new(a, b, lam).unwrap();
        let mut g0 = vec![0.0; 20];
        let p = proxline::problems::logistic_oracle(&prob);
        p.smooth.eval_grad(&[0.0; 20], &mut g0);
        assert!((norm_inf(&g0) - lam).abs() <= 1e-12 * lam);
        for kind in SolverKind::ALL {
            let params = SolveParams::new(kind, prob.lipschitz_estimate());
            let x0: Vec<f64> = (0..20).map(|i| ((i + seed as usize) as f64).cos()).collect();
            let r = run(&p, &x0, &params, DirectionKind::Lbfgs { memory: 5 });
            assert!(norm_inf(&r.x_final) <= 1e-6, "{kind}: {}", norm_inf(&r.x_final));
        }
    }
}

fn newton_quotients(inst: &proxline::problems::BoxQpInstance, dir: DirectionKind) -> Vec<f64> {
    let p = inst.problem();
    let n = inst.dim();
    let params = fixed(SolverKind::PanocPlus, inst.lipschitz, 1.95).with_tol(1e-11);
    let gamma = params.fb.gamma;
    let r = run(&p, &vec![0.0; n], &params, dir);
    assert_eq!(r.status, SolveStatus::Converged);
    let pm = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        inst.inactive_mask().into_iter().map(|b| f64::from(u8::from(b))),
    ));
    let eye = DMatrix::<f64>::identity(n, n);
    let jac = (&eye - (&eye - inst.quad.hessian() * gamma) * pm) / gamma;
    r.trace
        .iter()
        .filter_map(|t| {
            let d = t.direction.as_ref().unwrap();
            let nd = norm(d);
            (nd > 0.0).then(|| {
                let rn = normal_residual_at(&p, t.x_bar.as_ref().unwrap(), gamma);
                let jd = &jac * nalgebra::DVector::from_column_slice(d);
                let v: Vec<f64> = rn.iter().zip(jd.iter()).map(|(a, b)| a + b).collect();
                norm(&v) / nd
            })
        })
        .collect()
}

/// `||R^nor(x̄ᵏ) + J d̄ᵏ|| / ||d̄ᵏ||` with `J` the residual Jacobian at the
/// solution.
#[test]
fn quasi_newton_directions_align_with_newton() {
    let inst = common::box_qp(20, 4);
    let q = newton_quotients(&inst, DirectionKind::Lbfgs { memory: 200 });
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&q[q.len() - 5..]) < 0.25 * mean(&q[..5]), "{q:?}");

    // the structured direction is the exact Newton step once the active set
    // has settled
    let q = newton_quotients(&inst, DirectionKind::StructuredNewton { memory: 5 });
    assert!(*q.last().unwrap() <= 1e-10, "{q:?}");
}

#[test]
fn structured_newton_solves_box_qp_in_few_iterations() {
    let inst = common::box_qp(20, 1);
    let params = SolveParams::new(SolverKind::PanocPlus, inst.lipschitz).with_tol(1e-10);
    let r = run(&inst.problem(), &[0.0; 20], &params, DirectionKind::StructuredNewton { memory: 10 });
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.iterations <= 10, "{}", r.iterations);
}

#[test]
fn l1_problems_accept_l1_prox() {
    let p = CompositeProblem::new(QuadraticFn::diagonal(vec![2.0, 1.0], vec![-3.0, 0.2]), L1Norm::new(2, 1.0).unwrap())
        .unwrap();
    let params = SolveParams::new(SolverKind::PanocPlus, 2.0).with_tol(1e-12);
    let r = run(&p, &[0.0, 0.0], &params, DirectionKind::Lbfgs { memory: 3 });
    // separable closed form: x1 = (3 - 1)/2, x2 = 0
    assert!((r.x_final[0] - 1.0).abs() < 1e-12 && r.x_final[1] == 0.0, "{:?}", r.x_final);
}
