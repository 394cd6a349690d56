#![allow(dead_code)]

use proxline::oracles::{CompositeProblem, L1Norm, ProxOracle, SmoothOracle};
use proxline::problems::{
    logistic_oracle, make_box_qp, make_lasso, make_synthetic_logistic, BoxQpInstance, LeastSquares, LogisticFn,
    LogisticProblem, QuadraticFn,
};
use proxline::BoxSet;

pub fn box_qp(n: usize, seed: u64) -> BoxQpInstance {
    make_box_qp(n, seed, 0.3).unwrap()
}

pub fn lasso(seed: u64) -> (CompositeProblem<LeastSquares, L1Norm>, f64) {
    let inst = make_lasso(30, 20, 0.1, seed).unwrap();
    (inst.problem(), inst.lipschitz)
}

pub fn logistic(m: usize, n: usize, ratio: f64, seed: u64) -> (CompositeProblem<LogisticFn, L1Norm>, f64) {
    let (a, b) = make_synthetic_logistic(m, n, 0.3, seed);
    let lam = ratio * proxline::problems::lambda_max(&a, &b);
    let p = LogisticProblem::new(a, b, lam).unwrap();
    let l = p.lipschitz_estimate();
    (logistic_oracle(&p), l)
}

pub fn box_qp_problem(n: usize, seed: u64) -> (CompositeProblem<QuadraticFn, BoxSet>, f64, BoxQpInstance) {
    let inst = box_qp(n, seed);
    (inst.problem(), inst.lipschitz, inst)
}

/// Central-difference gradient check; returns the worst relative error
/// `||g - g_fd||∞ / max(1, ||g||∞)`.
pub fn gradient_fd_error<F: SmoothOracle + ?Sized>(f: &F, x: &[f64]) -> f64 {
    let n = x.len();
    let mut g = vec![0.0; n];
    f.eval_grad(x, &mut g);
    let mut xp = x.to_vec();
    let mut worst: f64 = 0.0;
    let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f.eval_f(&xp);
        xp[j] = x[j] - h;
        let fm = f.eval_f(&xp);
        xp[j] = x[j];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs() / scale);
    }
    worst
}

pub fn phi<F: SmoothOracle, G: ProxOracle>(p: &CompositeProblem<F, G>, x: &[f64]) -> f64 {
    p.eval_phi(x)
}
