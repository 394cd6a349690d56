use std::cell::Cell;

use crate::error::Result;
use crate::fbstep::{descent_bound_violated, forward_point, natural_residual, MAX_LIPSCHITZ_UPDATES};
use crate::linalg::{all_finite, norm_inf};
use crate::oracles::{CompositeProblem, EvalCounters, ProxOracle, SmoothOracle};

use super::{nonsmooth, Run, SolveParams, SolveResult, SolveStatus};

/// Proximal gradient `x⁺ = T_gamma(x)` started at `prox(x0)`, with the same
/// residual test and adaptive rule as [`super::panoc_plus_solve`], so that
/// the iterates coincide with those of the prox-merit method under the zero
/// direction.
pub fn pg_solve<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x0: &[f64],
    params: &SolveParams,
) -> Result<SolveResult> {
    let cell = Cell::new(EvalCounters::default());
    let mut run = Run::new(problem, x0, params, &cell)?;
    let n = x0.len();
    let mut fb = params.fb;

    let mut x = vec![0.0; n];
    let mut g_x = run.p.proximable.prox(x0, fb.gamma, &mut x);
    let mut f_x = run.p.smooth.eval_f(&x);
    let mut grad = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut k = 0;

    let (status, residual) = loop {
        let phi = f_x + g_x;
        if !phi.is_finite() {
            break (SolveStatus::Diverged, f64::NAN);
        }
        run.begin_iteration();
        run.p.smooth.eval_grad(&x, &mut grad);
        if !all_finite(&grad) {
            break (SolveStatus::Diverged, f64::NAN);
        }
        let mut updates = 0;
        let (x_bar, g_p, r_nat, f_p) = loop {
            let x_bar = forward_point(&x, &grad, fb.gamma);
            let g_p = run.p.proximable.prox(&x_bar, fb.gamma, &mut p);
            let r_nat = natural_residual(&x, &p, fb.gamma);
            if norm_inf(&r_nat) <= params.tol || k >= params.max_iter || !fb.adaptive {
                break (x_bar, g_p, r_nat, None);
            }
            let f_p = run.p.smooth.eval_f(&p);
            if !descent_bound_violated(f_p, f_x, &grad, &x, &p, fb.lipschitz) {
                break (x_bar, g_p, r_nat, Some(f_p));
            }
            if updates == MAX_LIPSCHITZ_UPDATES {
                return Err(nonsmooth(updates, &fb));
            }
            fb = fb.shrunk();
            updates += 1;
            run.lipschitz_updates += 1;
        };
        let r_inf = norm_inf(&r_nat);
        if r_inf <= params.tol {
            break (SolveStatus::Converged, r_inf);
        }
        if k >= params.max_iter {
            break (SolveStatus::MaxIter, r_inf);
        }
        let f_p = f_p.unwrap_or_else(|| run.p.smooth.eval_f(&p));
        run.record(k, &fb, 1.0, 0, false, updates, &r_nat, phi, f_p + g_p, || {
            (x.clone(), x_bar.clone(), vec![0.0; n])
        });
        std::mem::swap(&mut x, &mut p);
        f_x = f_p;
        g_x = g_p;
        k += 1;
    };

    Ok(run.finish(x, f_x + g_x, residual, k, status, fb))
}
