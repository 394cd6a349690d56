//! Fixtures shared by the criterion benchmarks.

use proxline::problems::{logistic_oracle, make_box_qp, make_synthetic_logistic, BoxQpInstance, LogisticProblem};

/// Box-QP with 30% active bounds.
pub fn box_qp(n: usize, seed: u64) -> BoxQpInstance {
    make_box_qp(n, seed, 0.3).expect("valid generator arguments")
}

/// Synthetic sparse logistic regression at `lambda_ratio · λ_max`.
pub fn logistic(m: usize, n: usize, lambda_ratio: f64, seed: u64) -> LogisticProblem {
    let (a, b) = make_synthetic_logistic(m, n, 0.1, seed);
    let mut p = LogisticProblem::new(a, b, 0.0).expect("generated labels are ±1");
    p.lambda = lambda_ratio * p.lambda_max();
    // fail early if the oracle cannot be built
    let _ = logistic_oracle(&p);
    p
}
