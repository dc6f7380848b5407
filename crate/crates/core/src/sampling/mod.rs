//! Deterministic standard-normal sample pools.
//!
//! A pool is a fixed set of points placed by minimizing the modified
//! Cramér–von Mises distance between the localized cumulative distribution
//! of `N(0, I)` and that of the equally weighted Dirac mixture. Pools are
//! generated offline, stored on disk, and varied per optimizer iteration by
//! either selecting a column block of a wider pool or permuting dimensions.

mod io;
mod objective;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{export_text, load_pool, save_pool};
pub use objective::{generate_pool, OptimizerConfig};

/// How a pool was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub seed: u64,
    pub optimizer_iterations: usize,
    pub converged: bool,
    pub kernel_width_max: f64,
    /// Objective value before the final moment correction.
    pub objective: f64,
    pub raw_mean_error: f64,
    pub raw_cov_error: f64,
    pub mean_error: f64,
    pub cov_error: f64,
    pub moment_correction: bool,
}

/// Moment and distance diagnostics of a pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolQuality {
    /// `‖sample mean‖_∞`
    pub mean_error: f64,
    /// `‖sample covariance − I‖_∞`, covariance normalized by `1/count`.
    pub cov_error: f64,
    /// Modified CvM distance to `N(0, I)`, scaled by `π^{-dim/2}`.
    pub cvm_value: f64,
}

/// Fixed `count × dim` set of standard-normal points. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    samples: DMatrix<f64>,
    provenance: Provenance,
}

impl SamplePool {
    pub fn new(samples: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::InvalidArgument {
                name: "count",
                reason: "pool must hold at least one sample".into(),
            });
        }
        if samples.ncols() == 0 {
            return Err(Error::InvalidArgument {
                name: "dim",
                reason: "pool dimension must be positive".into(),
            });
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "samples",
                reason: format!("non-finite entry at flat index {bad}"),
            });
        }
        Ok(SamplePool {
            samples,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn count(&self) -> usize {
        self.samples.nrows()
    }

    /// Samples as a `count × dim` matrix.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn quality(&self) -> PoolQuality {
        cvm_quality(self)
    }
}

/// Per-iteration variation of a deterministic pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VariationScheme {
    /// Pool of width `per-iteration dim × iterations`; iteration `j` uses
    /// the `j`-th column block.
    MultiIteration { iterations: usize },
    /// One pool of the per-iteration width; dimensions are shuffled each
    /// iteration.
    Permutation,
    /// Reuse the pool unchanged.
    None,
}

impl VariationScheme {
    /// Pool dimensionality required for a per-iteration dimension.
    pub fn pool_dim(&self, per_iter_dim: usize) -> usize {
        match *self {
            VariationScheme::MultiIteration { iterations } => per_iter_dim * iterations,
            VariationScheme::Permutation | VariationScheme::None => per_iter_dim,
        }
    }
}

/// Column block `[j·per_iter_dim, (j+1)·per_iter_dim)` of the pool.
pub fn select_iteration_subset(
    pool: &SamplePool,
    iteration: usize,
    per_iter_dim: usize,
) -> Result<DMatrix<f64>> {
    if per_iter_dim == 0 || !pool.dim().is_multiple_of(per_iter_dim) {
        return Err(Error::DimensionMismatch {
            context: "select_iteration_subset: pool dim must be a multiple of per-iteration dim",
            expected: per_iter_dim,
            actual: pool.dim(),
        });
    }
    let blocks = pool.dim() / per_iter_dim;
    if iteration >= blocks {
        return Err(Error::InvalidArgument {
            name: "iteration",
            reason: format!("iteration {iteration} out of range for {blocks} blocks"),
        });
    }
    Ok(pool
        .samples
        .columns(iteration * per_iter_dim, per_iter_dim)
        .into_owned())
}

/// Applies one random column permutation to every row.
pub fn permute_dimensions<R: Rng + ?Sized>(samples: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..samples.ncols()).collect();
    order.shuffle(rng);
    permute_columns(samples, &order)
}

/// `out[:, k] = samples[:, order[k]]`.
pub fn permute_columns(samples: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    debug_assert_eq!(order.len(), samples.ncols());
    let mut out = DMatrix::zeros(samples.nrows(), samples.ncols());
    for (k, &src) in order.iter().enumerate() {
        out.set_column(k, &samples.column(src));
    }
    out
}

/// Moment errors and objective value of a pool.
///
/// Every quantity is invariant under a column permutation of the pool bit
/// for bit: per-column moments are computed in row order and the distance
/// uses order-canonical squared norms.
pub fn cvm_quality(pool: &SamplePool) -> PoolQuality {
    let (mean_error, cov_error) = moment_errors(&pool.samples);
    let cvm_value = objective::canonical_distance(&pool.samples, pool.provenance.kernel_width_max);
    PoolQuality {
        mean_error,
        cov_error,
        cvm_value,
    }
}

/// `(‖mean‖_∞, ‖cov − I‖_∞)` with `1/count` covariance normalization.
pub fn moment_errors(samples: &DMatrix<f64>) -> (f64, f64) {
    let n = samples.nrows() as f64;
    let dim = samples.ncols();
    let means: Vec<f64> = samples.column_iter().map(|c| c.sum() / n).collect();
    let mean_error = means.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut cov_error = 0.0_f64;
    for a in 0..dim {
        for b in a..dim {
            let ca = samples.column(a);
            let cb = samples.column(b);
            let mut acc = 0.0;
            for i in 0..samples.nrows() {
                acc += (ca[i] - means[a]) * (cb[i] - means[b]);
            }
            let target = if a == b { 1.0 } else { 0.0 };
            cov_error = cov_error.max((acc / n - target).abs());
        }
    }
    (mean_error, cov_error)
}
