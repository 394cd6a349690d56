use std::cell::Cell;

use crate::directions::{DirectionInput, DirectionProvider};
use crate::error::Result;
use crate::linalg::{all_finite, norm_sq, sub};
use crate::oracles::{CompositeProblem, EvalCounters, ProxOracle, SmoothOracle};

use super::zerofpr::{check_point, finish_at_t, fixed_point_residual, FbPoint};
use super::{cap_direction, decrease_target, Run, SolveParams, SolveResult, SolveStatus};

/// PANOC: candidates `(1-τ)x̄ + τ(x + d)` with `x̄ = T(x)` and
/// `d = -H (x - T(x))`, accepted on envelope decrease. The accepted candidate's
/// value, gradient and forward-backward step are cached and become the next
/// iteration's data, so a unit step costs one gradient. Returns `T(x)`.
pub fn panoc_solve<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x0: &[f64],
    params: &SolveParams,
    provider: &mut dyn DirectionProvider,
) -> Result<SolveResult> {
    let cell = Cell::new(EvalCounters::default());
    let mut run = Run::new(problem, x0, params, &cell)?;
    let mut fb = params.fb;

    let mut pt = FbPoint::eval(&run.p, x0.to_vec(), fb.gamma);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut initialized = false;
    let mut k = 0;

    let (x_final, phi_final, residual, status) = loop {
        if !pt.fbe.is_finite() || !all_finite(&pt.grad) {
            break (pt.t.clone(), f64::NAN, f64::NAN, SolveStatus::Diverged);
        }
        run.begin_iteration();
        let mut reset = false;
        let (checked, f_t, stop, updates) =
            check_point(&mut run, params, &mut fb, pt, k, provider, &mut || reset = true)?;
        pt = checked;
        if reset {
            prev = None;
        }
        if let Some(status) = stop {
            let (x, phi, r) = finish_at_t(&run, &pt, f_t);
            break (x, phi, r, status);
        }

        let fpr = fixed_point_residual(&pt.r, fb.gamma);
        match prev.take() {
            Some((x0p, r0p)) => {
                provider.update(&sub(&pt.x, &x0p), &sub(&fpr, &r0p));
            }
            None if !initialized => {
                provider.initialize(&pt.x, &fpr);
                initialized = true;
            }
            None => {}
        }
        let mut d = provider.direction(&DirectionInput::residual_only(&pt.x, &fpr));
        if !all_finite(&d) {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        if params.cap_direction {
            cap_direction(&mut d, &pt.r);
        }

        let target = decrease_target(pt.fbe, fb.sigma, norm_sq(&pt.r));
        let mut tau = 1.0;
        let mut rejected = 0;
        let mut accepted = None;
        while rejected < params.max_backtracks {
            let cand: Vec<f64> = pt
                .t
                .iter()
                .zip(&pt.x)
                .zip(&d)
                .map(|((tb, x), d)| (1.0 - tau) * tb + tau * (x + d))
                .collect();
            // the current point itself (d = 0, τ = 1) cannot make progress;
            // only the rounding slack would let it pass
            if cand == pt.x {
                rejected += 1;
                tau *= fb.beta;
                continue;
            }
            let c = FbPoint::eval(&run.p, cand, fb.gamma);
            if c.fbe <= target {
                accepted = Some(c);
                break;
            }
            rejected += 1;
            tau *= fb.beta;
        }
        let fallback = accepted.is_none();
        let next = match accepted {
            Some(c) => c,
            None => {
                // τ = 0: the proximal-gradient point x̄
                let c = match f_t {
                    Some(f_bar) => {
                        let mut grad = vec![0.0; pt.x.len()];
                        run.p.smooth.eval_grad(&pt.t, &mut grad);
                        FbPoint::from_grad(&run.p, pt.t.clone(), f_bar, grad, fb.gamma)
                    }
                    None => FbPoint::eval(&run.p, pt.t.clone(), fb.gamma),
                };
                if c.fbe > target {
                    let (x, phi, r) = finish_at_t(&run, &pt, f_t);
                    break (x, phi, r, SolveStatus::LineSearchFailed);
                }
                c
            }
        };
        run.record(
            k,
            &fb,
            if fallback { 0.0 } else { tau },
            rejected,
            fallback,
            updates,
            &pt.r,
            pt.fbe,
            next.fbe,
            || (pt.x.clone(), pt.t.clone(), d.clone()),
        );
        prev = Some((pt.x.clone(), fpr));
        pt = next;
        k += 1;
    };

    Ok(run.finish(x_final, phi_final, residual, k, status, fb))
}
