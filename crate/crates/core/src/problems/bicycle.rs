//! Kinematic bicycle driving through an S-shaped corridor.
//!
//! State `z = (p_x, p_y, θ, v)`, input `u = (a, δ)`, explicit Euler with
//! step `dt`. The corridor constraint is `|p_y - s(p_x)| <= w` with
//! `s(p) = amplitude · tanh(slope · (p - center))`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracles::BoxSet;
use crate::problems::ocp::{DiagQuadCost, OcpModel, OcpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SCurve {
    pub amplitude: f64,
    pub slope: f64,
    pub center: f64,
}

impl SCurve {
    pub fn eval(&self, p: f64) -> f64 {
        self.amplitude * (self.slope * (p - self.center)).tanh()
    }

    pub fn derivative(&self, p: f64) -> f64 {
        let t = (self.slope * (p - self.center)).tanh();
        self.amplitude * self.slope * (1.0 - t * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicycleModel {
    pub wheelbase: f64,
    pub dt: f64,
    pub curve: SCurve,
}

impl OcpModel for BicycleModel {
    fn nz(&self) -> usize {
        4
    }

    fn nu(&self) -> usize {
        2
    }

    fn nc(&self) -> usize {
        1
    }

    fn step(&self, z: &[f64], u: &[f64], out: &mut [f64]) {
        let (th, v) = (z[2], z[3]);
        let dt = self.dt;
        out[0] = z[0] + dt * v * th.cos();
        out[1] = z[1] + dt * v * th.sin();
        out[2] = th + dt * v / self.wheelbase * u[1].tan();
        out[3] = v + dt * u[0];
    }

    fn step_jacobians(&self, z: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (th, v) = (z[2], z[3]);
        let dt = self.dt;
        let (s, c) = th.sin_cos();
        let tan_d = u[1].tan();
        let mut jz = DMatrix::identity(4, 4);
        jz[(0, 2)] = -dt * v * s;
        jz[(0, 3)] = dt * c;
        jz[(1, 2)] = dt * v * c;
        jz[(1, 3)] = dt * s;
        jz[(2, 3)] = dt * tan_d / self.wheelbase;
        let mut ju = DMatrix::zeros(4, 2);
        ju[(2, 1)] = dt * v / self.wheelbase * (1.0 + tan_d * tan_d);
        ju[(3, 0)] = dt;
        (jz, ju)
    }

    fn constraint(&self, z: &[f64], out: &mut [f64]) {
        out[0] = z[1] - self.curve.eval(z[0]);
    }

    fn constraint_jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 4, &[-self.curve.derivative(z[0]), 1.0, 0.0, 0.0])
    }
}

/// Desk-scale defaults; every field is configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct BicycleConfig {
    pub horizon: usize,
    pub dt: f64,
    pub wheelbase: f64,
    pub half_width: f64,
    pub curve: SCurve,
    pub goal: [f64; 2],
    pub position_weight: f64,
    pub terminal_weight: f64,
    pub input_weight: f64,
    pub accel_bound: f64,
    pub steer_bound: f64,
    /// `None` starts at rest on the corridor centerline at `p_x = 0`.
    pub z0: Option<[f64; 4]>,
}

impl Default for BicycleConfig {
    fn default() -> Self {
        let curve = SCurve {
            amplitude: 0.7,
            slope: 2.0,
            center: 2.0,
        };
        Self {
            horizon: 32,
            dt: 0.05,
            wheelbase: 0.5,
            half_width: 0.3,
            curve,
            goal: [4.0, curve.eval(4.0)],
            position_weight: 10.0,
            terminal_weight: 100.0,
            input_weight: 0.1,
            accel_bound: 1.0,
            steer_bound: 0.6,
            z0: None,
        }
    }
}

impl BicycleConfig {
    pub fn initial_state(&self) -> [f64; 4] {
        self.z0.unwrap_or([0.0, self.curve.eval(0.0), 0.0, 0.0])
    }

    pub fn model(&self) -> BicycleModel {
        BicycleModel {
            wheelbase: self.wheelbase,
            dt: self.dt,
            curve: self.curve,
        }
    }
}

/// Bicycle OCP: position tracking towards `goal`, input effort, corridor
/// constraint per stage.
pub fn make_bicycle_mpc(cfg: &BicycleConfig) -> Result<OcpProblem<BicycleModel>> {
    if cfg.horizon < 2 {
        return Err(Error::Config(format!("horizon must be >= 2, got {}", cfg.horizon)));
    }
    if !(cfg.half_width > 0.0) {
        return Err(Error::Config(format!("corridor half-width must be > 0, got {}", cfg.half_width)));
    }
    if !(cfg.dt > 0.0 && cfg.wheelbase > 0.0) {
        return Err(Error::Config("time step and wheelbase must be positive".into()));
    }
    let goal = vec![cfg.goal[0], cfg.goal[1], 0.0, 0.0];
    let (pw, tw) = (cfg.position_weight, cfg.terminal_weight);
    let p = OcpProblem {
        model: cfg.model(),
        horizon: cfg.horizon,
        z0: cfg.initial_state().to_vec(),
        state_cost: DiagQuadCost::new(vec![pw, pw, 0.0, 0.0], goal.clone())?,
        input_cost: DiagQuadCost::zero_ref(vec![cfg.input_weight; 2]),
        terminal_cost: DiagQuadCost::new(vec![tw, tw, 0.0, 0.0], goal)?,
        input_box: BoxSet::new(
            vec![-cfg.accel_bound, -cfg.steer_bound],
            vec![cfg.accel_bound, cfg.steer_bound],
        )?,
        constraint_box: BoxSet::uniform(1, -cfg.half_width, cfg.half_width)?,
    };
    p.validate()?;
    Ok(p)
}
