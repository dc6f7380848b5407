//! Gaussian proposal over flattened control sequences.
//!
//! Sequences are stored time-major: entry `n·d_u + m` is control dimension
//! `m` at stage `n`. The proposal covariance is `diag(σ)·C_ρ·diag(σ)` with a
//! fixed correlation `C_ρ`; only the marginal standard deviations `σ` and the
//! mean are updated.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Lower bound on every marginal standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    values: Vec<f64>,
    horizon: usize,
    control_dim: usize,
}

impl ControlSequence {
    pub fn new(values: Vec<f64>, horizon: usize, control_dim: usize) -> Result<Self> {
        if horizon == 0 || control_dim == 0 {
            return Err(Error::InvalidArgument {
                name: "horizon",
                reason: "horizon and control_dim must be positive".into(),
            });
        }
        if values.len() != horizon * control_dim {
            return Err(Error::DimensionMismatch {
                context: "control sequence length",
                expected: horizon * control_dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "values",
                reason: "control sequence entries must be finite".into(),
            });
        }
        Ok(ControlSequence {
            values,
            horizon,
            control_dim,
        })
    }

    /// The same control repeated over the horizon.
    pub fn constant(control: &[f64], horizon: usize) -> Result<Self> {
        Self::new(control.repeat(horizon), horizon, control.len())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn stage(&self, n: usize) -> &[f64] {
        &self.values[n * self.control_dim..(n + 1) * self.control_dim]
    }

    pub fn first_control(&self) -> &[f64] {
        self.stage(0)
    }

    /// Drops stage 0 and repeats the last stage.
    pub fn warm_start_shift(&self) -> ControlSequence {
        let mut values = self.values.clone();
        shift_stages(&mut values, self.control_dim);
        ControlSequence { values, ..*self }
    }
}

/// In-place shift-and-repeat of a time-major buffer.
pub fn shift_stages(values: &mut [f64], control_dim: usize) {
    let len = values.len();
    if len <= control_dim {
        return;
    }
    values.copy_within(control_dim.., 0);
    values.copy_within(len - 2 * control_dim..len - control_dim, len - control_dim);
}

#[derive(Debug, Clone)]
pub struct ProposalParams {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Fixed correlation square root `A_ρ`, shared between controllers.
    pub root: Arc<DMatrix<f64>>,
    /// Inverse temperature λ.
    pub lambda: f64,
    pub momentum_alpha: f64,
    pub control_dim: usize,
}

/// Weighted first and second moments of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ProposalParams {
    pub fn new(
        mean: Vec<f64>,
        sigma: Vec<f64>,
        root: Arc<DMatrix<f64>>,
        lambda: f64,
        momentum_alpha: f64,
        control_dim: usize,
    ) -> Result<Self> {
        let d = mean.len();
        if sigma.len() != d {
            return Err(Error::DimensionMismatch {
                context: "proposal sigma",
                expected: d,
                actual: sigma.len(),
            });
        }
        if root.nrows() != d || root.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "proposal correlation root",
                expected: d,
                actual: root.nrows(),
            });
        }
        if control_dim == 0 || !d.is_multiple_of(control_dim) {
            return Err(Error::DimensionMismatch {
                context: "proposal length must be a multiple of control_dim",
                expected: control_dim,
                actual: d,
            });
        }
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument {
                name: "sigma",
                reason: "all standard deviations must be positive".into(),
            });
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        if !(0.0..1.0).contains(&momentum_alpha) {
            return Err(Error::InvalidArgument {
                name: "momentum_alpha",
                reason: format!("must lie in [0, 1), got {momentum_alpha}"),
            });
        }
        Ok(ProposalParams {
            mean,
            sigma,
            root,
            lambda,
            momentum_alpha,
            control_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn horizon(&self) -> usize {
        self.mean.len() / self.control_dim
    }

    /// Implied covariance `diag(σ)·A_ρ·A_ρᵀ·diag(σ)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.factor();
        &l * l.transpose()
    }

    /// `L = diag(σ)·A_ρ`.
    pub fn factor(&self) -> DMatrix<f64> {
        let mut l = (*self.root).clone();
        for (mut row, s) in l.row_iter_mut().zip(&self.sigma) {
            row *= *s;
        }
        l
    }

    /// `ū ← α ū + (1 − α) ū'`
    pub fn blend_mean(&mut self, mean_prime: &[f64]) {
        let a = self.momentum_alpha;
        for (m, mp) in self.mean.iter_mut().zip(mean_prime) {
            *m = a * *m + (1.0 - a) * mp;
        }
    }

    /// `σ² ← α σ² + (1 − α) σ'²`, floored at [`SIGMA_FLOOR`].
    pub fn blend_variance(&mut self, var_prime: &[f64]) {
        let a = self.momentum_alpha;
        for (s, vp) in self.sigma.iter_mut().zip(var_prime) {
            let var = a * *s * *s + (1.0 - a) * vp;
            *s = var.sqrt().max(SIGMA_FLOOR);
        }
    }

    /// Warm start: shift mean and σ one stage, repeating the last stage.
    pub fn warm_start_shift(&mut self) {
        shift_stages(&mut self.mean, self.control_dim);
        shift_stages(&mut self.sigma, self.control_dim);
    }
}

/// Shapes standard-normal rows: `out_i = ū + diag(σ)·A_ρ·z_i`.
///
/// `std_samples` is `N × D`; the result has the same shape.
pub fn transform_samples(params: &ProposalParams, std_samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if std_samples.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            context: "transform_samples: sample width",
            expected: params.dim(),
            actual: std_samples.ncols(),
        });
    }
    let mut out = std_samples * params.root.transpose();
    for (k, mut col) in out.column_iter_mut().enumerate() {
        let (m, s) = (params.mean[k], params.sigma[k]);
        for v in col.iter_mut() {
            *v = m + s * *v;
        }
    }
    Ok(out)
}

/// Weighted mean and mean-centered elementwise variance of the rows of
/// `sequences`. Weights must sum to one.
pub fn weighted_moments(sequences: &DMatrix<f64>, weights: &[f64]) -> Result<Moments> {
    if sequences.nrows() == 0 {
        return Err(Error::Empty("weighted_moments"));
    }
    if weights.len() != sequences.nrows() {
        return Err(Error::DimensionMismatch {
            context: "weighted_moments: one weight per sequence",
            expected: sequences.nrows(),
            actual: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument {
            name: "weights",
            reason: format!("must sum to 1, sum is {total}"),
        });
    }
    let d = sequences.ncols();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for (k, col) in sequences.column_iter().enumerate() {
        let m: f64 = col.iter().zip(weights).map(|(v, w)| w * v).sum();
        mean[k] = m;
        var[k] = col.iter().zip(weights).map(|(v, w)| w * (v - m) * (v - m)).sum();
    }
    Ok(Moments { mean, var })
}
