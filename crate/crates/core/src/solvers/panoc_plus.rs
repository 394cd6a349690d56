use std::cell::Cell;

use crate::directions::{DirectionInput, DirectionProvider};
use crate::error::Result;
use crate::fbstep::{descent_bound_violated, forward_point, natural_residual, normal_residual, MAX_LIPSCHITZ_UPDATES};
use crate::linalg::{all_finite, norm_inf, norm_sq, sub};
use crate::oracles::{CompositeProblem, EvalCounters, ProxOracle, SmoothOracle};

use super::{cap_direction, decrease_target, nonsmooth, Run, SolveParams, SolveResult, SolveStatus};

/// Linesearch on `psi_gamma = phi ∘ prox_{gamma g}`.
///
/// Per iteration: `∇f(x̂)`, the forward point `x̄`, `p = prox(x̄)`, the
/// residual test, the adaptive check `f(p)`, `∇f(p)` for the normal residual,
/// then backtracking over `x̂⁺ = prox(x̄ + τd)`. Candidates cost one prox and
/// one `f` each and no gradients. Returns the prox point `x̂`.
pub fn panoc_plus_solve<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x0: &[f64],
    params: &SolveParams,
    provider: &mut dyn DirectionProvider,
) -> Result<SolveResult> {
    let cell = Cell::new(EvalCounters::default());
    let mut run = Run::new(problem, x0, params, &cell)?;
    let n = x0.len();
    let mut fb = params.fb;

    let mut x_hat = vec![0.0; n];
    let mut g_hat = run.p.proximable.prox(x0, fb.gamma, &mut x_hat);
    let mut f_hat = run.p.smooth.eval_f(&x_hat);
    let mut grad = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut grad_p = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut x_cand = vec![0.0; n];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut initialized = false;
    let mut k = 0;

    let (status, residual) = loop {
        let phi_hat = f_hat + g_hat;
        if !phi_hat.is_finite() {
            break (SolveStatus::Diverged, f64::NAN);
        }
        run.begin_iteration();
        run.p.smooth.eval_grad(&x_hat, &mut grad);
        if !all_finite(&grad) {
            break (SolveStatus::Diverged, f64::NAN);
        }

        // forward-backward step, restarted on every adaptive update
        let mut updates = 0;
        let (x_bar, g_p, r_nat, f_p) = loop {
            let x_bar = forward_point(&x_hat, &grad, fb.gamma);
            let g_p = run.p.proximable.prox(&x_bar, fb.gamma, &mut p);
            let r_nat = natural_residual(&x_hat, &p, fb.gamma);
            if norm_inf(&r_nat) <= params.tol || k >= params.max_iter || !fb.adaptive {
                break (x_bar, g_p, r_nat, None);
            }
            let f_p = run.p.smooth.eval_f(&p);
            if !descent_bound_violated(f_p, f_hat, &grad, &x_hat, &p, fb.lipschitz) {
                break (x_bar, g_p, r_nat, Some(f_p));
            }
            if updates == MAX_LIPSCHITZ_UPDATES {
                return Err(nonsmooth(updates, &fb));
            }
            fb = fb.shrunk();
            updates += 1;
            run.lipschitz_updates += 1;
            provider.reset();
            prev = None;
        };
        let r_inf = norm_inf(&r_nat);
        if r_inf <= params.tol {
            break (SolveStatus::Converged, r_inf);
        }
        if k >= params.max_iter {
            break (SolveStatus::MaxIter, r_inf);
        }

        run.p.smooth.eval_grad(&p, &mut grad_p);
        let r_nor = normal_residual(&x_bar, &p, &grad_p, fb.gamma);
        match prev.take() {
            Some((xb0, rn0)) => {
                provider.update(&sub(&x_bar, &xb0), &sub(&r_nor, &rn0));
            }
            None if !initialized => {
                provider.initialize(&x_bar, &r_nor);
                initialized = true;
            }
            None => {}
        }
        let mut d = provider.direction(&DirectionInput {
            x: &x_bar,
            residual: &r_nor,
            prox_point: &p,
            grad_at_prox: &grad_p,
            gamma: fb.gamma,
            hessian: Some(&run.p.smooth as &dyn SmoothOracle),
            bounds: run.p.proximable.box_bounds(),
        });
        if !all_finite(&d) {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        if params.cap_direction {
            cap_direction(&mut d, &r_nor);
        }

        let target = decrease_target(phi_hat, fb.sigma, norm_sq(&r_nat));
        let mut tau = 1.0;
        let mut accepted = None;
        let mut rejected = 0;
        while rejected < params.max_backtracks {
            for i in 0..n {
                cand[i] = x_bar[i] + tau * d[i];
            }
            let g_c = run.p.proximable.prox(&cand, fb.gamma, &mut x_cand);
            let f_c = run.p.smooth.eval_f(&x_cand);
            if f_c + g_c <= target {
                accepted = Some((f_c, g_c));
                break;
            }
            rejected += 1;
            tau *= fb.beta;
        }
        let fallback = accepted.is_none();
        let (f_next, g_next) = match accepted {
            Some(v) => v,
            None => {
                // pure proximal-gradient step x̂⁺ = p
                let f_p = f_p.unwrap_or_else(|| run.p.smooth.eval_f(&p));
                if f_p + g_p > target {
                    break (SolveStatus::LineSearchFailed, r_inf);
                }
                x_cand.copy_from_slice(&p);
                (f_p, g_p)
            }
        };

        let merit_next = f_next + g_next;
        run.record(
            k,
            &fb,
            if fallback { 0.0 } else { tau },
            rejected,
            fallback,
            updates,
            &r_nat,
            phi_hat,
            merit_next,
            || (x_hat.clone(), x_bar.clone(), d.clone()),
        );
        std::mem::swap(&mut x_hat, &mut x_cand);
        f_hat = f_next;
        g_hat = g_next;
        prev = Some((x_bar, r_nor));
        k += 1;
    };

    Ok(run.finish(x_hat, f_hat + g_hat, residual, k, status, fb))
}
