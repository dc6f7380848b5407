use std::f64::consts::FRAC_PI_2;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{Env, QuadraticCost, StateMap};

const TRAILER_LENGTH: f64 = 14.0;
const CAB_LENGTH: f64 = 6.0;
const MAX_STEER: f64 = 70.0 * std::f64::consts::PI / 180.0;
const MAX_TRAVEL: f64 = 3.0;

/// What the jackknife constraint clamps once `|θ_S − θ_C| > 90°`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JackknifeMode {
    /// Move `θ_C` toward `θ_S` so the difference is exactly 90°.
    #[default]
    AngleDifference,
    /// Clamp `|θ_C|` itself to 90°.
    AbsoluteCab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruckState {
    /// Rear axle position in m.
    pub x: f64,
    pub y: f64,
    /// Trailer angle to the x-axis in rad.
    pub theta_s: f64,
    /// Cab angle to the x-axis in rad.
    pub theta_c: f64,
}

impl TruckState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.theta_s, self.theta_c]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        TruckState {
            x: s[0],
            y: s[1],
            theta_s: s[2],
            theta_c: s[3],
        }
    }
}

/// Truck backer-upper kinematics with normalized steering and travel inputs.
#[derive(Debug)]
pub struct Truck {
    pub jackknife: JackknifeMode,
    u_min: [f64; 2],
    u_max: [f64; 2],
    cost: QuadraticCost,
    arcsin_clips: AtomicU64,
}

impl Default for Truck {
    fn default() -> Self {
        Self::new(JackknifeMode::default())
    }
}

impl Clone for Truck {
    fn clone(&self) -> Self {
        Truck {
            jackknife: self.jackknife,
            u_min: self.u_min,
            u_max: self.u_max,
            cost: self.cost.clone(),
            arcsin_clips: AtomicU64::new(self.arcsin_clips()),
        }
    }
}

impl Truck {
    pub fn new(jackknife: JackknifeMode) -> Self {
        Truck {
            jackknife,
            u_min: [-1.0, -1.0],
            u_max: [1.0, 1.0],
            cost: QuadraticCost {
                q: vec![0.01, 0.5, 5.0, 0.01],
                r: vec![1e-3, 5.0],
                q_terminal: vec![0.1, 1.0, 10.0, 0.1],
                goal: vec![0.0; 4],
                state_map: StateMap::Identity,
            },
            arcsin_clips: AtomicU64::new(0),
        }
    }

    /// Number of arcsin arguments clipped into `[-1, 1]` so far.
    pub fn arcsin_clips(&self) -> u64 {
        self.arcsin_clips.load(Ordering::Relaxed)
    }

    fn asin_clipped(&self, v: f64) -> f64 {
        if v.abs() > 1.0 {
            self.arcsin_clips.fetch_add(1, Ordering::Relaxed);
        }
        v.clamp(-1.0, 1.0).asin()
    }
}

impl Env for Truck {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn u_min(&self) -> &[f64] {
        &self.u_min
    }

    fn u_max(&self) -> &[f64] {
        &self.u_max
    }

    fn step(&self, state: &[f64], u: &[f64], next: &mut [f64]) {
        let [x, y, ts, tc] = [state[0], state[1], state[2], state[3]];
        let steer = MAX_STEER * u[0];
        let travel = MAX_TRAVEL * u[1];
        let a = travel * steer.cos();
        let b = a * (tc - ts).cos();
        let (sin_s, cos_s) = ts.sin_cos();
        next[0] = x - b * cos_s;
        next[1] = y - b * sin_s;
        let ts_next = ts - self.asin_clipped(a * (tc - ts).sin() / TRAILER_LENGTH);
        let mut tc_next = tc + self.asin_clipped(travel * steer.sin() / (TRAILER_LENGTH + CAB_LENGTH));
        let diff = tc_next - ts_next;
        if diff.abs() > FRAC_PI_2 {
            tc_next = match self.jackknife {
                JackknifeMode::AngleDifference => ts_next + FRAC_PI_2.copysign(diff),
                JackknifeMode::AbsoluteCab => tc_next.clamp(-FRAC_PI_2, FRAC_PI_2),
            };
        }
        next[2] = ts_next;
        next[3] = tc_next;
    }

    fn cost(&self) -> &QuadraticCost {
        &self.cost
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["x", "y", "theta_s", "theta_c"]
    }
}
