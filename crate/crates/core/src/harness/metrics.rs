//! Episode metrics and summary statistics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn cumulative_cost(stage_costs: &[f64]) -> f64 {
    stage_costs.iter().sum()
}

fn squared_differences(controls: &[Vec<f64>]) -> f64 {
    controls
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

/// `Σ_{k≥1} ‖u_k − u_{k−1}‖²`.
pub fn smoothness(controls: &[Vec<f64>]) -> f64 {
    squared_differences(controls)
}

/// Smoothness of the window `⌈T/2⌉ ..= T−1`; the difference crossing into
/// the window is not counted.
pub fn settled_smoothness(controls: &[Vec<f64>]) -> f64 {
    let start = controls.len().div_ceil(2);
    squared_differences(&controls[start..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linearly interpolated quantile of ascending `sorted` data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("summarize"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
