//! Discrete-time optimal control by single shooting: the states are rolled
//! out from the inputs and gradients come from an adjoint recursion.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::alm::{ConstraintMap, NlpProblem};
use crate::error::{check_dim, Error, Result};
use crate::oracles::{BoxSet, SmoothOracle};

/// Dynamics `z⁺ = Γ(z, u)` and the per-stage constraint map `c(z)`.
pub trait OcpModel: Send + Sync {
    fn nz(&self) -> usize;
    fn nu(&self) -> usize;
    fn nc(&self) -> usize;

    fn step(&self, z: &[f64], u: &[f64], out: &mut [f64]);

    /// `(∂Γ/∂z, ∂Γ/∂u)` at `(z, u)`.
    fn step_jacobians(&self, z: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);

    fn constraint(&self, z: &[f64], out: &mut [f64]);

    /// `∂c/∂z`, shape `nc × nz`.
    fn constraint_jacobian(&self, z: &[f64]) -> DMatrix<f64>;
}

/// `½ Σ wᵢ (vᵢ - refᵢ)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagQuadCost {
    pub weights: Vec<f64>,
    pub reference: Vec<f64>,
}

impl DiagQuadCost {
    pub fn new(weights: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        check_dim(weights.len(), reference.len())?;
        Ok(Self { weights, reference })
    }

    pub fn zero_ref(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self {
            weights,
            reference: vec![0.0; n],
        }
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        0.5 * v
            .iter()
            .zip(&self.weights)
            .zip(&self.reference)
            .map(|((x, w), r)| w * (x - r) * (x - r))
            .sum::<f64>()
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.weights)
            .zip(&self.reference)
            .map(|((x, w), r)| w * (x - r))
            .collect()
    }
}

/// Stage costs `ℓ(z, u) = state(z) + input(u)` for `k < N` and terminal
/// cost `terminal(z^N)`.
#[derive(Clone)]
pub struct OcpProblem<M> {
    pub model: M,
    pub horizon: usize,
    pub z0: Vec<f64>,
    pub state_cost: DiagQuadCost,
    pub input_cost: DiagQuadCost,
    pub terminal_cost: DiagQuadCost,
    /// Per-stage input box (dimension `nu`).
    pub input_box: BoxSet,
    /// Per-stage box on `c(z)` (dimension `nc`).
    pub constraint_box: BoxSet,
}

impl<M: OcpModel> OcpProblem<M> {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        check_dim(m.nz(), self.z0.len())?;
        check_dim(m.nz(), self.state_cost.weights.len())?;
        check_dim(m.nz(), self.terminal_cost.weights.len())?;
        check_dim(m.nu(), self.input_cost.weights.len())?;
        check_dim(m.nu(), self.input_box.len())?;
        check_dim(m.nc(), self.constraint_box.len())?;
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.model.nu() * self.horizon
    }

    pub fn n_constraints(&self) -> usize {
        self.model.nc() * self.horizon
    }

    /// States `z⁰, …, z^N` for the stacked inputs `u`.
    pub fn rollout(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let (nz, nu) = (self.model.nz(), self.model.nu());
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(self.z0.clone());
        for k in 0..self.horizon {
            let mut next = vec![0.0; nz];
            self.model.step(&states[k], &u[k * nu..(k + 1) * nu], &mut next);
            states.push(next);
        }
        states
    }

    fn cost_from_states(&self, u: &[f64], states: &[Vec<f64>]) -> f64 {
        let nu = self.model.nu();
        let stages: f64 = (0..self.horizon)
            .map(|k| self.state_cost.value(&states[k]) + self.input_cost.value(&u[k * nu..(k + 1) * nu]))
            .sum();
        stages + self.terminal_cost.value(&states[self.horizon])
    }

    /// `∇ψ(u) + J_hᵀ w` in one backward pass; `w = None` gives `∇ψ`, and
    /// `with_cost = false` drops the cost terms (pure `J_hᵀ w`).
    fn adjoint(&self, u: &[f64], states: &[Vec<f64>], w: Option<&[f64]>, with_cost: bool, grad: &mut [f64]) {
        let (nz, nu, nc) = (self.model.nz(), self.model.nu(), self.model.nc());
        let n = self.horizon;
        let stage_state_term = |k: usize, lam: &mut DVector<f64>| {
            if let Some(w) = w {
                if k >= 1 {
                    let cj = self.model.constraint_jacobian(&states[k]);
                    let wk = DVector::from_column_slice(&w[(k - 1) * nc..k * nc]);
                    *lam += cj.tr_mul(&wk);
                }
            }
        };
        let mut lam = if with_cost {
            DVector::from_vec(self.terminal_cost.gradient(&states[n]))
        } else {
            DVector::zeros(nz)
        };
        stage_state_term(n, &mut lam);
        for k in (0..n).rev() {
            let uk = &u[k * nu..(k + 1) * nu];
            let (jz, ju) = self.model.step_jacobians(&states[k], uk);
            let gu = ju.tr_mul(&lam);
            let mut next = jz.tr_mul(&lam);
            for j in 0..nu {
                grad[k * nu + j] = gu[j];
            }
            if with_cost {
                let lu = self.input_cost.gradient(uk);
                for j in 0..nu {
                    grad[k * nu + j] += lu[j];
                }
                next += DVector::from_vec(self.state_cost.gradient(&states[k]));
            }
            stage_state_term(k, &mut next);
            lam = next;
        }
    }
}

/// Shared single-shooting evaluator; implements both the cost oracle and
/// the constraint map `h(u) = (c(z¹), …, c(z^N))`.
pub struct SingleShooting<M> {
    pub ocp: OcpProblem<M>,
}

impl<M: OcpModel> SingleShooting<M> {
    /// `∇ψ(u) + J_hᵀ w` with one rollout and one adjoint pass.
    pub fn lagrangian_gradient(&self, u: &[f64], w: &[f64], grad: &mut [f64]) {
        let states = self.ocp.rollout(u);
        self.ocp.adjoint(u, &states, Some(w), true, grad);
    }
}

impl<M: OcpModel> SmoothOracle for SingleShooting<M> {
    fn dim(&self) -> usize {
        self.ocp.n_inputs()
    }

    fn eval_f(&self, u: &[f64]) -> f64 {
        let states = self.ocp.rollout(u);
        self.ocp.cost_from_states(u, &states)
    }

    fn eval_grad(&self, u: &[f64], grad: &mut [f64]) {
        let states = self.ocp.rollout(u);
        self.ocp.adjoint(u, &states, None, true, grad);
    }

    fn eval_f_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let states = self.ocp.rollout(u);
        self.ocp.adjoint(u, &states, None, true, grad);
        self.ocp.cost_from_states(u, &states)
    }
}

impl<M: OcpModel> ConstraintMap for SingleShooting<M> {
    fn dim_in(&self) -> usize {
        self.ocp.n_inputs()
    }

    fn dim_out(&self) -> usize {
        self.ocp.n_constraints()
    }

    fn eval_h(&self, u: &[f64], out: &mut [f64]) {
        let nc = self.ocp.model.nc();
        let states = self.ocp.rollout(u);
        for k in 1..=self.ocp.horizon {
            self.ocp.model.constraint(&states[k], &mut out[(k - 1) * nc..k * nc]);
        }
    }

    fn jtvp(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        let states = self.ocp.rollout(u);
        self.ocp.adjoint(u, &states, Some(w), false, out);
    }
}

/// Eliminates the dynamics: decision variable `u ∈ R^{nu·N}`, `C` the
/// stacked input box and `D` the stacked constraint box.
pub fn ocp_single_shooting<M: OcpModel + 'static>(p: OcpProblem<M>) -> Result<NlpProblem> {
    p.validate()?;
    let c_set = p.input_box.repeated(p.horizon);
    let d_set = p.constraint_box.repeated(p.horizon);
    let shooting = Arc::new(SingleShooting { ocp: p });
    Ok(NlpProblem {
        cost: shooting.clone(),
        constraint: shooting,
        c_set,
        d_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `z⁺ = z + u` (scalar) with `c(z) = z`.
    struct Integrator;
    impl OcpModel for Integrator {
        fn nz(&self) -> usize {
            1
        }
        fn nu(&self) -> usize {
            1
        }
        fn nc(&self) -> usize {
            1
        }
        fn step(&self, z: &[f64], u: &[f64], out: &mut [f64]) {
            out[0] = z[0] + u[0];
        }
        fn step_jacobians(&self, _z: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
            (DMatrix::identity(1, 1), DMatrix::identity(1, 1))
        }
        fn constraint(&self, z: &[f64], out: &mut [f64]) {
            out[0] = z[0];
        }
        fn constraint_jacobian(&self, _z: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(1, 1)
        }
    }

    fn integrator(n: usize) -> OcpProblem<Integrator> {
        OcpProblem {
            model: Integrator,
            horizon: n,
            z0: vec![0.0],
            state_cost: DiagQuadCost::zero_ref(vec![0.0]),
            input_cost: DiagQuadCost::zero_ref(vec![1.0]),
            terminal_cost: DiagQuadCost::zero_ref(vec![1.0]),
            input_box: BoxSet::unbounded(1),
            constraint_box: BoxSet::unbounded(1),
        }
    }

    #[test]
    fn one_stage_hand_example() {
        let s = SingleShooting { ocp: integrator(1) };
        assert_eq!(s.eval_f(&[3.0]), 9.0);
        let mut g = [0.0];
        s.eval_grad(&[3.0], &mut g);
        assert_eq!(g, [6.0]);
    }

    #[test]
    fn constraint_map_and_transpose_product() {
        let s = SingleShooting { ocp: integrator(3) };
        let u = [1.0, 2.0, -0.5];
        let mut h = [0.0; 3];
        s.eval_h(&u, &mut h);
        assert_eq!(h, [1.0, 3.0, 2.5]);
        // J_h is lower-triangular ones: J_hᵀw = suffix sums of w
        let mut out = [0.0; 3];
        s.jtvp(&u, &[1.0, 10.0, 100.0], &mut out);
        assert_eq!(out, [111.0, 110.0, 100.0]);
    }

    #[test]
    fn rollout_is_deterministic() {
        let p = integrator(4);
        let u = [0.1, 0.2, 0.3, 0.4];
        let a = p.rollout(&u);
        let b = p.rollout(&u);
        assert_eq!(a, b);
    }

    #[test]
    fn validate_flags_dimension_errors() {
        let mut p = integrator(2);
        p.z0 = vec![0.0, 1.0];
        assert!(p.validate().is_err());
    }
}
