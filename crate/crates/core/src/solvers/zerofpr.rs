use std::cell::Cell;

use crate::directions::{DirectionInput, DirectionProvider};
use crate::error::Result;
use crate::fbstep::{descent_bound_violated, fbe_from_parts, forward_point, natural_residual, MAX_LIPSCHITZ_UPDATES};
use crate::linalg::{all_finite, norm_inf, norm_sq, sub};
use crate::oracles::{CompositeProblem, EvalCounters, ProxOracle, SmoothOracle};

use super::{cap_direction, decrease_target, nonsmooth, Run, SolveParams, SolveResult, SolveStatus};

/// Forward-backward data at a point `x`: `f(x)`, `∇f(x)`, `T(x)`, `g(T(x))`,
/// `R^nat(x)` and the envelope value.
pub(crate) struct FbPoint {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub t: Vec<f64>,
    pub g_t: f64,
    pub r: Vec<f64>,
    pub fbe: f64,
}

impl FbPoint {
    /// One `f`, one gradient, one prox.
    pub fn eval<F: SmoothOracle, G: ProxOracle>(p: &CompositeProblem<F, G>, x: Vec<f64>, gamma: f64) -> Self {
        let n = x.len();
        let mut grad = vec![0.0; n];
        let f = p.smooth.eval_f_grad(&x, &mut grad);
        Self::from_grad(p, x, f, grad, gamma)
    }

    /// Reuses `f` and `∇f`; one prox.
    pub fn from_grad<F: SmoothOracle, G: ProxOracle>(
        p: &CompositeProblem<F, G>,
        x: Vec<f64>,
        f: f64,
        grad: Vec<f64>,
        gamma: f64,
    ) -> Self {
        let mut t = vec![0.0; x.len()];
        let g_t = p.proximable.prox(&forward_point(&x, &grad, gamma), gamma, &mut t);
        let r = natural_residual(&x, &t, gamma);
        let fbe = fbe_from_parts(f, &grad, g_t, &r, gamma);
        Self { x, f, grad, t, g_t, r, fbe }
    }

    /// Recomputes `T(x)` for a new stepsize.
    pub fn restep<F: SmoothOracle, G: ProxOracle>(self, p: &CompositeProblem<F, G>, gamma: f64) -> Self {
        Self::from_grad(p, self.x, self.f, self.grad, gamma)
    }
}

/// Runs the adaptive check between `x` and `T(x)` and the termination and
/// iteration-limit tests. Returns the (possibly re-stepped) point, `f(T(x))`
/// when it was evaluated, and the stop status if any.
pub(crate) fn check_point<F: SmoothOracle, G: ProxOracle>(
    run: &mut Run<'_, F, G>,
    params: &SolveParams,
    fb: &mut crate::fbstep::FbParams,
    mut pt: FbPoint,
    k: usize,
    provider: &mut dyn DirectionProvider,
    on_reset: &mut dyn FnMut(),
) -> Result<(FbPoint, Option<f64>, Option<SolveStatus>, usize)> {
    let mut updates = 0;
    loop {
        if norm_inf(&pt.r) <= params.tol {
            return Ok((pt, None, Some(SolveStatus::Converged), updates));
        }
        if k >= params.max_iter {
            return Ok((pt, None, Some(SolveStatus::MaxIter), updates));
        }
        if !fb.adaptive {
            return Ok((pt, None, None, updates));
        }
        let f_t = run.p.smooth.eval_f(&pt.t);
        if !descent_bound_violated(f_t, pt.f, &pt.grad, &pt.x, &pt.t, fb.lipschitz) {
            return Ok((pt, Some(f_t), None, updates));
        }
        if updates == MAX_LIPSCHITZ_UPDATES {
            return Err(nonsmooth(updates, fb));
        }
        *fb = fb.shrunk();
        updates += 1;
        run.lipschitz_updates += 1;
        provider.reset();
        on_reset();
        pt = pt.restep(&run.p, fb.gamma);
    }
}

/// `x - T(x) = gamma R^nat(x)`. The envelope baselines hand this unscaled
/// residual to the direction provider, so an empty L-BFGS buffer yields the
/// forward-backward step itself.
pub(crate) fn fixed_point_residual(r_nat: &[f64], gamma: f64) -> Vec<f64> {
    r_nat.iter().map(|v| gamma * v).collect()
}

/// Final iterate of the envelope baselines: `T(x)` with `phi(T(x))`.
pub(crate) fn finish_at_t<F: SmoothOracle, G: ProxOracle>(
    run: &Run<'_, F, G>,
    pt: &FbPoint,
    f_t: Option<f64>,
) -> (Vec<f64>, f64, f64) {
    let f_t = f_t.unwrap_or_else(|| run.p.smooth.eval_f(&pt.t));
    (pt.t.clone(), f_t + pt.g_t, norm_inf(&pt.r))
}

/// ZeroFPR: candidates `x̄ + τd` with `x̄ = T(x)` and `d = -H (x̄ - T(x̄))`,
/// accepted on envelope decrease. Every candidate costs a full envelope
/// evaluation (one `f`, one gradient, one prox); the fallback `τ = 0` reuses
/// the data already computed at `x̄`. Returns `T(x)`.
pub fn zerofpr_solve<F: SmoothOracle, G: ProxOracle>(
    problem: &CompositeProblem<F, G>,
    x0: &[f64],
    params: &SolveParams,
    provider: &mut dyn DirectionProvider,
) -> Result<SolveResult> {
    let cell = Cell::new(EvalCounters::default());
    let mut run = Run::new(problem, x0, params, &cell)?;
    let n = x0.len();
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

        // forward-backward step at x̄ = T(x)
        let x_bar = pt.t.clone();
        let mut grad_bar = vec![0.0; n];
        run.p.smooth.eval_grad(&x_bar, &mut grad_bar);
        let mut t_bar = vec![0.0; n];
        let g_t_bar = run.p.proximable.prox(&forward_point(&x_bar, &grad_bar, fb.gamma), fb.gamma, &mut t_bar);
        let r_bar = natural_residual(&x_bar, &t_bar, fb.gamma);
        let fpr = fixed_point_residual(&r_bar, fb.gamma);

        match prev.take() {
            Some((x0b, r0b)) => {
                provider.update(&sub(&x_bar, &x0b), &sub(&fpr, &r0b));
            }
            None if !initialized => {
                provider.initialize(&x_bar, &fpr);
                initialized = true;
            }
            None => {}
        }
        let mut d = provider.direction(&DirectionInput::residual_only(&x_bar, &fpr));
        if !all_finite(&d) {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        if params.cap_direction {
            cap_direction(&mut d, &r_bar);
        }

        let target = decrease_target(pt.fbe, fb.sigma, norm_sq(&pt.r));
        let mut tau = 1.0;
        let mut rejected = 0;
        let mut accepted = None;
        while rejected < params.max_backtracks {
            let cand: Vec<f64> = x_bar.iter().zip(&d).map(|(x, d)| x + tau * d).collect();
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
                let f_bar = f_t.unwrap_or_else(|| run.p.smooth.eval_f(&x_bar));
                let fbe = fbe_from_parts(f_bar, &grad_bar, g_t_bar, &r_bar, fb.gamma);
                if fbe > target {
                    let (x, phi, r) = finish_at_t(&run, &pt, f_t);
                    break (x, phi, r, SolveStatus::LineSearchFailed);
                }
                FbPoint {
                    x: x_bar.clone(),
                    f: f_bar,
                    grad: grad_bar,
                    t: t_bar,
                    g_t: g_t_bar,
                    r: r_bar.clone(),
                    fbe,
                }
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
            || (pt.x.clone(), x_bar.clone(), d.clone()),
        );
        prev = Some((x_bar, fpr));
        pt = next;
        k += 1;
    };

    Ok(run.finish(x_final, phi_final, residual, k, status, fb))
}
