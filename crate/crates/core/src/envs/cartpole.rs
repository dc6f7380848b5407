use serde::{Deserialize, Serialize};

use super::{Env, QuadraticCost, StateMap};

/// Frictionless cart-pole physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from pivot to the pole's center of mass.
    pub half_length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            dt: 0.02,
        }
    }
}

/// `φ = 0` is upright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl CartPoleState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.phi, self.phi_dot]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        CartPoleState {
            x: s[0],
            x_dot: s[1],
            phi: s[2],
            phi_dot: s[3],
        }
    }

    /// `[x, ẋ, cos φ, sin φ, φ̇]`
    pub fn augment(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        StateMap::CartPoleTrig.apply(&self.to_array(), &mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    u_min: [f64; 1],
    u_max: [f64; 1],
    cost: QuadraticCost,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new(CartPoleParams::default())
    }
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        CartPole {
            params,
            u_min: [-20.0],
            u_max: [20.0],
            cost: QuadraticCost {
                q: vec![0.1, 0.1, 1.0, 0.1, 0.1],
                r: vec![1e-4],
                q_terminal: vec![10.0, 0.1, 10.0, 0.1, 0.1],
                goal: vec![0.0, 0.0, 1.0, 0.0, 0.0],
                state_map: StateMap::CartPoleTrig,
            },
        }
    }

    /// Accelerations `(ẍ, φ̈)` under horizontal force `force`.
    pub fn accelerations(&self, state: &[f64], force: f64) -> (f64, f64) {
        let p = &self.params;
        let total = p.cart_mass + p.pole_mass;
        let pml = p.pole_mass * p.half_length;
        let (sin, cos) = state[2].sin_cos();
        let temp = (force + pml * state[3] * state[3] * sin) / total;
        let phi_acc =
            (p.gravity * sin - cos * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
        let x_acc = temp - pml * phi_acc * cos / total;
        (x_acc, phi_acc)
    }

    /// Total mechanical energy (pole modelled as a uniform rod).
    pub fn energy(&self, state: &[f64]) -> f64 {
        let p = &self.params;
        let (l, m) = (p.half_length, p.pole_mass);
        let (x_dot, phi, phi_dot) = (state[1], state[2], state[3]);
        0.5 * (p.cart_mass + m) * x_dot * x_dot
            + m * l * x_dot * phi_dot * phi.cos()
            + 0.5 * (4.0 / 3.0) * m * l * l * phi_dot * phi_dot
            + m * p.gravity * l * phi.cos()
    }

    /// Semi-implicit Euler step with an arbitrary step size.
    pub fn step_with_dt(&self, state: &[f64], force: f64, dt: f64, next: &mut [f64]) {
        let (x_acc, phi_acc) = self.accelerations(state, force);
        let x_dot = state[1] + dt * x_acc;
        let phi_dot = state[3] + dt * phi_acc;
        next[0] = state[0] + dt * x_dot;
        next[1] = x_dot;
        next[2] = state[2] + dt * phi_dot;
        next[3] = phi_dot;
    }
}

impl Env for CartPole {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn u_min(&self) -> &[f64] {
        &self.u_min
    }

    fn u_max(&self) -> &[f64] {
        &self.u_max
    }

    fn step(&self, state: &[f64], u: &[f64], next: &mut [f64]) {
        self.step_with_dt(state, u[0], self.params.dt, next);
    }

    fn cost(&self) -> &QuadraticCost {
        &self.cost
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["x", "x_dot", "phi", "phi_dot"]
    }
}
