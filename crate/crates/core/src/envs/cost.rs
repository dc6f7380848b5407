use serde::{Deserialize, Serialize};

/// Mapping from the raw state to the vector the cost is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMap {
    Identity,
    /// `[x, ẋ, φ, φ̇] → [x, ẋ, cos φ, sin φ, φ̇]`
    CartPoleTrig,
}

impl StateMap {
    pub fn output_dim(&self, state_dim: usize) -> usize {
        match self {
            StateMap::Identity => state_dim,
            StateMap::CartPoleTrig => 5,
        }
    }

    pub fn apply(&self, state: &[f64], out: &mut [f64]) {
        match self {
            StateMap::Identity => out.copy_from_slice(state),
            StateMap::CartPoleTrig => {
                let (s, c) = state[2].sin_cos();
                out.copy_from_slice(&[state[0], state[1], c, s, state[3]]);
            }
        }
    }
}

/// Diagonal quadratic stage and terminal cost around a goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub q_terminal: Vec<f64>,
    pub goal: Vec<f64>,
    pub state_map: StateMap,
}

const MAX_FEATURES: usize = 8;

impl QuadraticCost {
    fn weighted_error(&self, weights: &[f64], state: &[f64]) -> f64 {
        let n = self.goal.len();
        let mut buf = [0.0; MAX_FEATURES];
        let feat = &mut buf[..n];
        self.state_map.apply(state, feat);
        feat.iter()
            .zip(&self.goal)
            .zip(weights)
            .map(|((x, g), w)| w * (x - g) * (x - g))
            .sum()
    }

    /// `(x̃ − x_g)ᵀ Q (x̃ − x_g) + uᵀ R u`
    pub fn stage_cost(&self, state: &[f64], u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.r.len());
        let control: f64 = u.iter().zip(&self.r).map(|(u, r)| r * u * u).sum();
        self.weighted_error(&self.q, state) + control
    }

    /// `(x̃ − x_g)ᵀ Q_H (x̃ − x_g)`
    pub fn terminal_cost(&self, state: &[f64]) -> f64 {
        self.weighted_error(&self.q_terminal, state)
    }

    pub(crate) fn check(&self, state_dim: usize, control_dim: usize) -> crate::Result<()> {
        let n = self.state_map.output_dim(state_dim);
        for (name, len) in [("q", self.q.len()), ("q_terminal", self.q_terminal.len()), ("goal", self.goal.len())] {
            if len != n {
                return Err(crate::Error::Config(format!("cost.{name} has length {len}, expected {n}")));
            }
        }
        if self.r.len() != control_dim {
            return Err(crate::Error::Config(format!(
                "cost.r has length {}, expected {control_dim}",
                self.r.len()
            )));
        }
        if n > MAX_FEATURES {
            return Err(crate::Error::Config(format!("cost vectors longer than {MAX_FEATURES}")));
        }
        let negative = self.q.iter().chain(&self.r).chain(&self.q_terminal).any(|w| !(*w >= 0.0));
        if negative {
            return Err(crate::Error::Config("cost weights must be nonnegative".into()));
        }
        Ok(())
    }
}
