//! The MPC step and the method lineup built on it.
//!
//! Every method runs the same loop; [`Wiring`] selects where standard-normal
//! samples come from, how costs become weights, whether the temperature and
//! variances adapt, whether a buffer of good sequences is carried, and
//! whether the step returns the proposal mean or the best sequence.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationStructure;
use crate::envs::{clamp_controls, rollout_cost, Env};
use crate::proposal::{transform_samples, weighted_moments, ControlSequence, ProposalParams};
use crate::sampling::{permute_dimensions, select_iteration_subset, SamplePool, VariationScheme};
use crate::weighting::{adapt_temperature, elite_weights, exponential_weights, WeightingConfig, WeightingScheme};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mppi,
    MppiIterative,
    DsmppiPermutation,
    DsmppiMultiIteration,
    DscemPermutation,
    DscemMultiIteration,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mppi,
        Method::MppiIterative,
        Method::DsmppiPermutation,
        Method::DsmppiMultiIteration,
        Method::DscemPermutation,
        Method::DscemMultiIteration,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mppi => "mppi",
            Method::MppiIterative => "mppi_iterative",
            Method::DsmppiPermutation => "dsmppi_permutation",
            Method::DsmppiMultiIteration => "dsmppi_multi_iteration",
            Method::DscemPermutation => "dscem_permutation",
            Method::DscemMultiIteration => "dscem_multi_iteration",
        }
    }

    /// Component configuration of the method for `iterations` optimizer
    /// iterations and a buffer of `buffer_size` sequences.
    pub fn wiring(&self, iterations: usize, buffer_size: usize) -> Wiring {
        let iterative = Wiring {
            iterations,
            source: SampleSource::Random,
            scheme: WeightingScheme::Exponential,
            adapt_temperature: true,
            update_sigma: true,
            buffer_size,
            return_rule: ReturnRule::Best,
        };
        let multi = SampleSource::Pool(VariationScheme::MultiIteration { iterations });
        let perm = SampleSource::Pool(VariationScheme::Permutation);
        let cem = |source| Wiring {
            source,
            scheme: WeightingScheme::Elite,
            adapt_temperature: false,
            ..iterative
        };
        match self {
            Method::Mppi => Wiring {
                iterations: 1,
                update_sigma: false,
                buffer_size: 0,
                return_rule: ReturnRule::Mean,
                ..iterative
            },
            Method::MppiIterative => iterative,
            Method::DsmppiPermutation => Wiring { source: perm, ..iterative },
            Method::DsmppiMultiIteration => Wiring { source: multi, ..iterative },
            Method::DscemPermutation => cem(perm),
            Method::DscemMultiIteration => cem(multi),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    /// Fresh standard-normal draws every iteration.
    Random,
    /// A deterministic pool with a per-iteration variation scheme.
    Pool(VariationScheme),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnRule {
    /// First control of the updated proposal mean.
    Mean,
    /// First control of the lowest-cost sequence of the final iteration.
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wiring {
    pub iterations: usize,
    pub source: SampleSource,
    pub scheme: WeightingScheme,
    pub adapt_temperature: bool,
    pub update_sigma: bool,
    pub buffer_size: usize,
    pub return_rule: ReturnRule,
}

/// What happens to σ at the start of each MPC step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaWarmStart {
    /// Shift like the mean, repeating the last stage.
    Shift,
    /// Reset to `sigma0`.
    #[default]
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub method: Method,
    pub iterations: usize,
    pub horizon: usize,
    pub sample_count: usize,
    pub buffer_size: usize,
    /// Per-entry initial standard deviation, length `horizon · d_u`.
    pub sigma0: Vec<f64>,
    pub mean0: Vec<f64>,
    pub beta: f64,
    pub weighting: WeightingConfig,
    pub momentum_alpha: f64,
    pub sigma_warm_start: SigmaWarmStart,
    /// Seed of the random-sampling and permutation streams.
    pub seed: u64,
    pub parallel_rollouts: bool,
}

impl ControllerConfig {
    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    pub fn wiring(&self) -> Wiring {
        let mut w = self.method.wiring(self.iterations, self.buffer_size);
        if let Some(scheme) = self.weighting.scheme {
            w.scheme = scheme;
            w.adapt_temperature = scheme == WeightingScheme::Exponential;
        }
        w
    }

    fn validate(&self, control_dim: usize) -> Result<()> {
        let d = self.horizon * control_dim;
        if self.horizon == 0 || self.iterations == 0 || self.sample_count == 0 {
            return Err(Error::Config("horizon, iterations and sample_count must be positive".into()));
        }
        if self.mean0.len() != d || self.sigma0.len() != d {
            return Err(Error::Config(format!(
                "mean0/sigma0 must have length horizon·d_u = {d}, got {}/{}",
                self.mean0.len(),
                self.sigma0.len()
            )));
        }
        self.weighting.validate()
    }
}

/// Up to `capacity` distinct sequences with the lowest costs, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EliteBuffer {
    capacity: usize,
    entries: Vec<(ControlSequence, f64)>,
}

impl EliteBuffer {
    pub fn new(capacity: usize) -> Self {
        EliteBuffer {
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ControlSequence, f64)] {
        &self.entries
    }

    /// Keeps the lowest-cost distinct sequences among the current entries
    /// and the new batch. Earlier candidates win cost ties; non-finite costs
    /// are never retained.
    pub fn refresh(&mut self, sequences: &[ControlSequence], costs: &[f64]) {
        assert_eq!(sequences.len(), costs.len(), "one cost per sequence");
        if self.capacity == 0 {
            self.entries.clear();
            return;
        }
        let old = std::mem::take(&mut self.entries);
        let mut candidates: Vec<(&ControlSequence, f64)> = old.iter().map(|(s, c)| (s, *c)).collect();
        candidates.extend(sequences.iter().zip(costs.iter().copied()).filter(|(_, c)| c.is_finite()));
        candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut kept: Vec<(ControlSequence, f64)> = Vec::with_capacity(self.capacity);
        for (seq, cost) in candidates {
            if kept.len() == self.capacity {
                break;
            }
            if !kept.iter().any(|(s, _)| s == seq) {
                kept.push((seq.clone(), cost));
            }
        }
        self.entries = kept;
    }

    /// Warm start: shift every sequence one stage. Costs become stale and
    /// the entries are handed back for re-evaluation.
    fn take_shifted(&mut self) -> Vec<ControlSequence> {
        self.entries.drain(..).map(|(s, _)| s.warm_start_shift()).collect()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// Minimum cost of the evaluated batch.
    pub rho: f64,
    /// Exponential normalization constant; elite count for elite weights.
    pub eta: f64,
    /// Temperature used for this iteration's weights.
    pub lambda: f64,
    pub best_cost: f64,
    pub evaluated: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: Vec<IterationDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Clamped control to apply.
    pub control: Vec<f64>,
    pub best_sequence: ControlSequence,
    pub best_cost: f64,
    pub diagnostics: StepDiagnostics,
}

pub struct Controller<'e, E: Env> {
    env: &'e E,
    config: ControllerConfig,
    wiring: Wiring,
    pool: Option<Arc<SamplePool>>,
    proposal: ProposalParams,
    buffer: EliteBuffer,
    noise_rng: ChaCha8Rng,
    permutation_rng: ChaCha8Rng,
    started: bool,
}

impl<'e, E: Env> Controller<'e, E> {
    pub fn new(env: &'e E, config: ControllerConfig, pool: Option<Arc<SamplePool>>) -> Result<Self> {
        let wiring = config.wiring();
        Self::with_wiring(env, config, wiring, pool)
    }

    /// Builds a controller with explicit components instead of the
    /// method's defaults.
    pub fn with_wiring(
        env: &'e E,
        config: ControllerConfig,
        wiring: Wiring,
        pool: Option<Arc<SamplePool>>,
    ) -> Result<Self> {
        let du = env.control_dim();
        config.validate(du)?;
        env.cost().check(env.state_dim(), du)?;
        if wiring.iterations == 0 {
            return Err(Error::Config("wiring needs at least one iteration".into()));
        }
        let d = config.dim();
        if let SampleSource::Pool(scheme) = wiring.source {
            let pool = pool
                .as_ref()
                .ok_or_else(|| Error::Config(format!("method {} needs a sample pool", config.method)))?;
            if let VariationScheme::MultiIteration { iterations } = scheme {
                if iterations < wiring.iterations {
                    return Err(Error::Config(format!(
                        "multi-iteration pool has {iterations} blocks for {} iterations",
                        wiring.iterations
                    )));
                }
            }
            if pool.dim() != scheme.pool_dim(d) || pool.count() != config.sample_count {
                return Err(Error::Config(format!(
                    "pool is {} × {}, method {} needs {} × {}",
                    pool.count(),
                    pool.dim(),
                    config.method,
                    config.sample_count,
                    scheme.pool_dim(d)
                )));
            }
        }
        let corr = CorrelationStructure::cached(config.horizon, du, config.beta)?;
        let proposal = ProposalParams::new(
            config.mean0.clone(),
            config.sigma0.clone(),
            Arc::new(corr.root.clone()),
            config.weighting.lambda0,
            config.momentum_alpha,
            du,
        )?;
        Ok(Controller {
            env,
            noise_rng: ChaCha8Rng::seed_from_u64(config.seed),
            permutation_rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
            buffer: EliteBuffer::new(wiring.buffer_size),
            config,
            wiring,
            pool,
            proposal,
            started: false,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn wiring(&self) -> &Wiring {
        &self.wiring
    }

    pub fn proposal(&self) -> &ProposalParams {
        &self.proposal
    }

    pub fn buffer(&self) -> &EliteBuffer {
        &self.buffer
    }

    /// Standard-normal `N × D` samples for iteration `j`.
    fn standard_samples(&mut self, iteration: usize) -> Result<DMatrix<f64>> {
        let (n, d) = (self.config.sample_count, self.config.dim());
        match self.wiring.source {
            SampleSource::Random => Ok(draw_standard_normal(&mut self.noise_rng, n, d)),
            SampleSource::Pool(scheme) => {
                let pool = self.pool.as_ref().expect("checked at construction");
                match scheme {
                    VariationScheme::Permutation => Ok(permute_dimensions(pool.samples(), &mut self.permutation_rng)),
                    VariationScheme::MultiIteration { .. } => select_iteration_subset(pool, iteration, d),
                    VariationScheme::None => Ok(pool.samples().clone()),
                }
            }
        }
    }

    fn evaluate(&self, x: &[f64], sequences: &[f64]) -> Vec<f64> {
        let d = self.config.dim();
        if self.config.parallel_rollouts {
            sequences.par_chunks_exact(d).map(|s| rollout_cost(self.env, x, s)).collect()
        } else {
            sequences.chunks_exact(d).map(|s| rollout_cost(self.env, x, s)).collect()
        }
    }

    /// One MPC step from the measured state `x`.
    pub fn step(&mut self, x: &[f64]) -> Result<StepOutput> {
        if x.len() != self.env.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "controller state",
                expected: self.env.state_dim(),
                actual: x.len(),
            });
        }
        let (h, du) = (self.config.horizon, self.env.control_dim());
        let d = h * du;

        let mut carried = Vec::new();
        if self.started {
            self.proposal.warm_start_shift();
            if self.config.sigma_warm_start == SigmaWarmStart::Reset {
                self.proposal.sigma.clone_from(&self.config.sigma0);
            }
            carried = self.buffer.take_shifted();
        }
        if !self.config.weighting.persist_lambda {
            self.proposal.lambda = self.config.weighting.lambda0;
        }
        self.started = true;

        let mut diagnostics = StepDiagnostics::default();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for j in 0..self.wiring.iterations {
            let z = self.standard_samples(j)?;
            let sampled = transform_samples(&self.proposal, &z)?;
            let reused: Vec<ControlSequence> = if j == 0 {
                std::mem::take(&mut carried)
            } else {
                self.buffer.entries().iter().map(|(s, _)| s.clone()).collect()
            };
            // Row-major `M × D`: sampled sequences, then reused ones.
            let mut flat = sampled.transpose().as_slice().to_vec();
            for s in &reused {
                flat.extend_from_slice(s.values());
            }
            let m = flat.len() / d;
            let costs = self.evaluate(x, &flat);

            let lambda = self.proposal.lambda;
            let (weights, eta) = match self.wiring.scheme {
                WeightingScheme::Exponential => {
                    let w = exponential_weights(&costs, lambda)?;
                    (w.weights, w.eta)
                }
                WeightingScheme::Elite => {
                    if costs.iter().all(|c| !c.is_finite()) {
                        return Err(Error::AllRolloutsFailed { count: m });
                    }
                    let k = self.config.weighting.elite_count(m);
                    (elite_weights(&costs, k)?, k as f64)
                }
            };
            let batch = DMatrix::from_row_slice(m, d, &flat);
            let moments = weighted_moments(&batch, &weights)?;
            self.proposal.blend_mean(&moments.mean);
            if self.wiring.update_sigma {
                self.proposal.blend_variance(&moments.var);
            }
            if self.wiring.adapt_temperature {
                self.proposal.lambda = adapt_temperature(lambda, eta, &self.config.weighting);
            }

            let sequences: Vec<ControlSequence> = flat
                .chunks_exact(d)
                .map(|s| ControlSequence::new(s.to_vec(), h, du))
                .collect::<Result<_>>()?;
            self.buffer.refresh(&sequences, &costs);

            let (arg, &best_cost) = costs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty batch");
            best = Some((sequences[arg].values().to_vec(), best_cost));
            diagnostics.iterations.push(IterationDiagnostics {
                iteration: j,
                rho: best_cost,
                eta,
                lambda,
                best_cost,
                evaluated: m,
            });
        }

        let (best_values, best_cost) = best.expect("at least one iteration");
        let best_sequence = ControlSequence::new(best_values, h, du)?;
        let raw = match self.wiring.return_rule {
            ReturnRule::Mean => &self.proposal.mean[..du],
            ReturnRule::Best => best_sequence.first_control(),
        };
        let mut control = vec![0.0; du];
        clamp_controls(raw, self.env.u_min(), self.env.u_max(), &mut control);
        Ok(StepOutput {
            control,
            best_sequence,
            best_cost,
            diagnostics,
        })
    }
}

/// `n × d` standard-normal matrix filled sample by sample.
pub fn draw_standard_normal(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    let values: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    DMatrix::from_row_slice(n, d, &values)
}
