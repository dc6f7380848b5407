//! Experiment configuration files.
//!
//! ```toml
//! [experiment]
//! task = "truck"                      # or "cartpole"
//! methods = ["mppi", "dsmppi_multi_iteration"]
//! sample_counts = [20, 50, 100, 200, 300]
//! seeds = [0, 1, 2]                   # or: seed_count = 100
//! episode_length = 100                # default per task
//! output_dir = "results"
//!
//! [controller]                        # every key optional, task defaults below
//! iterations = 3                      # J_I
//! horizon = 15                        # H
//! buffer_size = 3                     # E
//! sigma0 = 1.0                        # scalar, per-control vector or full H·d_u vector
//! mean0 = 0.0
//! beta = 1.0                          # noise color
//! momentum_alpha = 0.0
//!
//! [weighting]                         # eta_min, eta_max, elite_frac, lambda0, ...
//! [pool]                              # deterministic pool optimizer settings
//! [truck]
//! jackknife = "angle_difference"      # or "absolute_cab"
//! ```
//!
//! | task     | J_I | H  | E | σ₀ | ū₀ | β | T   |
//! |----------|-----|----|---|----|----|---|-----|
//! | cartpole | 3   | 30 | 3 | 10 | 0  | 1 | 300 |
//! | truck    | 3   | 15 | 3 | 1  | 0  | 1 | 100 |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, Method, SigmaWarmStart};
use crate::envs::{JackknifeMode, TaskKind};
use crate::sampling::OptimizerConfig;
use crate::weighting::WeightingConfig;
use crate::{Error, Result};

pub const MAX_SAMPLE_COUNT: usize = 100_000;

pub const DEFAULT_SAMPLE_COUNTS: [usize; 5] = [20, 50, 100, 200, 300];

/// Scalar, per-control or full-length vector setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fill {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Fill {
    pub fn expand(&self, horizon: usize, control_dim: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            Fill::Scalar(v) => Ok(vec![*v; horizon * control_dim]),
            Fill::Vector(v) if v.len() == control_dim => Ok(v.repeat(horizon)),
            Fill::Vector(v) if v.len() == horizon * control_dim => Ok(v.clone()),
            Fill::Vector(v) => Err(Error::Config(format!(
                "controller.{name} has {} entries; expected 1, {control_dim} or {}",
                v.len(),
                horizon * control_dim
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub task: TaskKind,
    pub methods: Vec<Method>,
    #[serde(default = "default_sample_counts")]
    pub sample_counts: Vec<usize>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for `seeds = [0, 1, …, seed_count − 1]`.
    #[serde(default)]
    pub seed_count: Option<u64>,
    #[serde(default)]
    pub episode_length: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Run independent episodes on the rayon pool.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_sample_counts() -> Vec<usize> {
    DEFAULT_SAMPLE_COUNTS.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub iterations: Option<usize>,
    pub horizon: Option<usize>,
    pub buffer_size: Option<usize>,
    pub sigma0: Option<Fill>,
    pub mean0: Option<Fill>,
    pub beta: Option<f64>,
    pub momentum_alpha: Option<f64>,
    pub sigma_warm_start: Option<SigmaWarmStart>,
    pub parallel_rollouts: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruckSection {
    pub jackknife: JackknifeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub weighting: WeightingConfig,
    #[serde(default)]
    pub pool: OptimizerConfig,
    #[serde(default)]
    pub truck: TruckSection,
}

/// Momentum used when the config leaves `momentum_alpha` unset.
pub const DEFAULT_MOMENTUM_ALPHA: f64 = 0.0;

impl ExperimentConfig {
    /// Minimal config with task defaults everywhere.
    pub fn new(task: TaskKind, methods: Vec<Method>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            experiment: ExperimentSection {
                task,
                methods,
                sample_counts: default_sample_counts(),
                seeds: None,
                seed_count: None,
                episode_length: None,
                output_dir: output_dir.into(),
                parallel: true,
            },
            controller: ControllerSection::default(),
            weighting: WeightingConfig::default(),
            pool: OptimizerConfig::default(),
            truck: TruckSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.experiment.seeds, self.experiment.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(n)) => (0..n).collect(),
            (None, None) => vec![0],
        }
    }

    pub fn episode_length(&self) -> usize {
        self.experiment
            .episode_length
            .unwrap_or_else(|| self.experiment.task.defaults().episode_length)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.methods.is_empty() {
            return Err(Error::Config("experiment.methods is empty".into()));
        }
        if e.seeds.is_some() && e.seed_count.is_some() {
            return Err(Error::Config("set either experiment.seeds or experiment.seed_count".into()));
        }
        if self.seeds().is_empty() {
            return Err(Error::Config("experiment.seeds is empty".into()));
        }
        if e.sample_counts.is_empty() || e.sample_counts.iter().any(|&n| n == 0 || n > MAX_SAMPLE_COUNT) {
            return Err(Error::Config(format!(
                "experiment.sample_counts must be non-empty with entries in [1, {MAX_SAMPLE_COUNT}]"
            )));
        }
        if self.episode_length() == 0 {
            return Err(Error::Config("experiment.episode_length must be positive".into()));
        }
        if let Some(a) = self.controller.momentum_alpha {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::Config(format!("controller.momentum_alpha {a} not in [0, 1)")));
            }
        }
        self.weighting.validate()?;
        for &m in &e.methods {
            self.controller_config(m, e.sample_counts[0], 0)?;
        }
        Ok(())
    }

    /// Controller settings for one run; the run seed drives the sampling
    /// streams.
    pub fn controller_config(&self, method: Method, sample_count: usize, seed: u64) -> Result<ControllerConfig> {
        let task = self.experiment.task;
        let d = task.defaults();
        let c = &self.controller;
        let du = match task {
            TaskKind::Cartpole => 1,
            TaskKind::Truck => 2,
        };
        let horizon = c.horizon.unwrap_or(d.horizon);
        let sigma0 = c.sigma0.clone().unwrap_or(Fill::Scalar(d.sigma0)).expand(horizon, du, "sigma0")?;
        let mean0 = c.mean0.clone().unwrap_or(Fill::Scalar(d.mean0)).expand(horizon, du, "mean0")?;
        Ok(ControllerConfig {
            method,
            iterations: c.iterations.unwrap_or(d.iterations),
            horizon,
            sample_count,
            buffer_size: c.buffer_size.unwrap_or(d.buffer_size),
            sigma0,
            mean0,
            beta: c.beta.unwrap_or(d.beta),
            weighting: self.weighting.clone(),
            momentum_alpha: c.momentum_alpha.unwrap_or(DEFAULT_MOMENTUM_ALPHA),
            sigma_warm_start: c.sigma_warm_start.unwrap_or_default(),
            seed: controller_seed(seed),
            parallel_rollouts: c.parallel_rollouts.unwrap_or(false),
        })
    }
}

/// Controller stream seed for a run seed; kept apart from the initial-state
/// stream.
pub fn controller_seed(run_seed: u64) -> u64 {
    run_seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(0x6a09_e667_f3bc_c909)
}
