//! Sample weights from rollout costs, and temperature adaptation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LAMBDA_FLOOR: f64 = 1e-4;
pub const LAMBDA_CEIL: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    /// `w ∝ exp(−(J − ρ)/λ)`
    Exponential,
    /// Equal weights on the lowest-cost fraction.
    Elite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightingConfig {
    /// Overrides the method's default scheme when set.
    pub scheme: Option<WeightingScheme>,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Elite set size as a fraction of the evaluated batch (at least one).
    pub elite_frac: f64,
    /// Initial inverse temperature.
    pub lambda0: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Carry λ over between MPC steps instead of resetting to `lambda0`.
    pub persist_lambda: bool,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig {
            scheme: None,
            eta_min: 5.0,
            eta_max: 10.0,
            elite_frac: 0.1,
            lambda0: 1.0,
            lambda_min: LAMBDA_FLOOR,
            lambda_max: LAMBDA_CEIL,
            persist_lambda: true,
        }
    }
}

impl WeightingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min > 0.0 && self.eta_min < self.eta_max) {
            return Err(Error::Config(format!(
                "weighting: need 0 < eta_min < eta_max, got [{}, {}]",
                self.eta_min, self.eta_max
            )));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return Err(Error::Config(format!("weighting.elite_frac {} not in (0, 1]", self.elite_frac)));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda0 && self.lambda0 <= self.lambda_max) {
            return Err(Error::Config(format!(
                "weighting: need 0 < lambda_min <= lambda0 <= lambda_max, got {} / {} / {}",
                self.lambda_min, self.lambda0, self.lambda_max
            )));
        }
        Ok(())
    }

    /// Elite count for a batch of `n` samples.
    pub fn elite_count(&self, n: usize) -> usize {
        ((self.elite_frac * n as f64).floor() as usize).clamp(1, n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialWeights {
    pub weights: Vec<f64>,
    /// Sum of the unnormalized shifted exponentials, in `[1, N]`.
    pub eta: f64,
    /// Minimum cost ρ.
    pub rho: f64,
}

/// MPPI weights with the minimum-cost shift.
///
/// `+∞` costs mark failed rollouts: they get zero weight and are ignored
/// when computing ρ. Any other non-finite cost is an error.
pub fn exponential_weights(costs: &[f64], lambda: f64) -> Result<ExponentialWeights> {
    if costs.is_empty() {
        return Err(Error::Empty("exponential_weights"));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        });
    }
    if let Some((index, &value)) = costs
        .iter()
        .enumerate()
        .find(|(_, c)| c.is_nan() || **c == f64::NEG_INFINITY)
    {
        return Err(Error::NonFiniteCost { index, value });
    }
    let rho = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if rho == f64::INFINITY {
        return Err(Error::AllRolloutsFailed { count: costs.len() });
    }
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - rho) / lambda).exp() } else { 0.0 })
        .collect();
    let eta: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= eta;
    }
    Ok(ExponentialWeights { weights, eta, rho })
}

/// Indices of the `k` lowest costs; equal costs keep index order.
pub fn elite_indices(costs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    order.truncate(k);
    order
}

/// Weight `1/K` on the `K` lowest-cost samples, zero elsewhere.
pub fn elite_weights(costs: &[f64], elite_count: usize) -> Result<Vec<f64>> {
    if elite_count == 0 || elite_count > costs.len() {
        return Err(Error::InvalidArgument {
            name: "elite_count",
            reason: format!("must lie in [1, {}], got {elite_count}", costs.len()),
        });
    }
    if let Some(index) = costs.iter().position(|c| c.is_nan()) {
        return Err(Error::NonFiniteCost { index, value: f64::NAN });
    }
    let mut weights = vec![0.0; costs.len()];
    let w = 1.0 / elite_count as f64;
    for i in elite_indices(costs, elite_count) {
        weights[i] = w;
    }
    Ok(weights)
}

/// Multiplicative temperature rule: shrink when weights are spread
/// (`η > η_max`), grow when concentrated (`η < η_min`).
pub fn adapt_temperature(lambda: f64, eta: f64, config: &WeightingConfig) -> f64 {
    let next = if eta > config.eta_max {
        0.9 * lambda
    } else if eta < config.eta_min {
        1.2 * lambda
    } else {
        lambda
    };
    next.clamp(config.lambda_min, config.lambda_max)
}
