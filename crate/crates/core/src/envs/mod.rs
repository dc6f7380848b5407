//! Benchmark systems, quadratic costs and trajectory shooting.

mod cartpole;
mod cost;
mod truck;

use serde::{Deserialize, Serialize};

pub use cartpole::{CartPole, CartPoleParams, CartPoleState};
pub use cost::{QuadraticCost, StateMap};
pub use truck::{JackknifeMode, Truck, TruckState};

pub(crate) const MAX_STATE_DIM: usize = 8;

/// A deterministic discrete-time system with box-bounded controls.
pub trait Env: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn u_min(&self) -> &[f64];
    fn u_max(&self) -> &[f64];
    /// One step with an already clamped control.
    fn step(&self, state: &[f64], u: &[f64], next: &mut [f64]);
    fn cost(&self) -> &QuadraticCost;
    fn state_names(&self) -> &'static [&'static str];
}

/// Elementwise `min(max(u, u_min), u_max)`.
pub fn clamp_controls(u: &[f64], u_min: &[f64], u_max: &[f64], out: &mut [f64]) {
    for (((o, v), lo), hi) in out.iter_mut().zip(u).zip(u_min).zip(u_max) {
        *o = v.max(*lo).min(*hi);
    }
}

/// Full record of one shot trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// `H + 1` states starting at `x0`.
    pub states: Vec<Vec<f64>>,
    /// `H` clamped controls.
    pub controls_applied: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    /// Stage costs summed in order, then the terminal cost; `+∞` if the
    /// trajectory left the finite range.
    pub cost: f64,
}

impl RolloutResult {
    pub fn failed(&self) -> bool {
        self.cost == f64::INFINITY
    }
}

/// Shoots `seq` from `x0` with clamping and records everything.
pub fn rollout<E: Env + ?Sized>(env: &E, x0: &[f64], seq: &[f64]) -> RolloutResult {
    let (nx, nu) = (env.state_dim(), env.control_dim());
    assert_eq!(seq.len() % nu, 0, "sequence length must be a multiple of control_dim");
    let horizon = seq.len() / nu;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls_applied = Vec::with_capacity(horizon);
    let mut stage_costs = Vec::with_capacity(horizon);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; nx];
    let mut u = vec![0.0; nu];
    let mut total = 0.0;
    let mut failed = false;
    for stage in seq.chunks_exact(nu) {
        clamp_controls(stage, env.u_min(), env.u_max(), &mut u);
        let g = env.cost().stage_cost(&x, &u);
        total += g;
        env.step(&x, &u, &mut next);
        states.push(std::mem::replace(&mut x, next.clone()));
        controls_applied.push(u.clone());
        stage_costs.push(g);
        failed |= !next.iter().all(|v| v.is_finite());
    }
    let terminal_cost = env.cost().terminal_cost(&x);
    states.push(x);
    let cost = total + terminal_cost;
    RolloutResult {
        states,
        controls_applied,
        stage_costs,
        terminal_cost,
        cost: if failed || !cost.is_finite() { f64::INFINITY } else { cost },
    }
}

/// Cost of shooting `seq` from `x0`, without recording the trajectory.
/// Bitwise equal to [`rollout`]`(..).cost`.
pub fn rollout_cost<E: Env + ?Sized>(env: &E, x0: &[f64], seq: &[f64]) -> f64 {
    let (nx, nu) = (env.state_dim(), env.control_dim());
    debug_assert!(nx <= MAX_STATE_DIM && nu <= MAX_STATE_DIM);
    let mut xa = [0.0; MAX_STATE_DIM];
    let mut xb = [0.0; MAX_STATE_DIM];
    let mut ub = [0.0; MAX_STATE_DIM];
    xa[..nx].copy_from_slice(x0);
    let (mut x, mut next) = (&mut xa, &mut xb);
    let u = &mut ub[..nu];
    let cost = env.cost();
    let mut total = 0.0;
    for stage in seq.chunks_exact(nu) {
        clamp_controls(stage, env.u_min(), env.u_max(), u);
        total += cost.stage_cost(&x[..nx], u);
        env.step(&x[..nx], u, &mut next[..nx]);
        if !next[..nx].iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        std::mem::swap(&mut x, &mut next);
    }
    let total = total + cost.terminal_cost(&x[..nx]);
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(alias = "cart_pole")]
    Cartpole,
    Truck,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Cartpole => "cartpole",
            TaskKind::Truck => "truck",
        }
    }

    /// Table of task parameters used by the benchmark.
    pub fn defaults(&self) -> TaskDefaults {
        match self {
            TaskKind::Cartpole => TaskDefaults {
                horizon: 30,
                iterations: 3,
                buffer_size: 3,
                beta: 1.0,
                mean0: 0.0,
                sigma0: 10.0,
                episode_length: 300,
            },
            TaskKind::Truck => TaskDefaults {
                horizon: 15,
                iterations: 3,
                buffer_size: 3,
                beta: 1.0,
                mean0: 0.0,
                sigma0: 1.0,
                episode_length: 100,
            },
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "cartpole" | "cart_pole" => Ok(TaskKind::Cartpole),
            "truck" => Ok(TaskKind::Truck),
            other => Err(crate::Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Per-task controller and episode defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDefaults {
    pub horizon: usize,
    pub iterations: usize,
    pub buffer_size: usize,
    pub beta: f64,
    pub mean0: f64,
    pub sigma0: f64,
    pub episode_length: usize,
}

/// Runtime-selected benchmark.
#[derive(Debug)]
pub enum Task {
    CartPole(CartPole),
    Truck(Truck),
}

impl Task {
    pub fn new(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Cartpole => Task::CartPole(CartPole::default()),
            TaskKind::Truck => Task::Truck(Truck::default()),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Task::CartPole(_) => TaskKind::Cartpole,
            Task::Truck(_) => TaskKind::Truck,
        }
    }
}
