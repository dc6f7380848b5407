//! Fixed time-correlation structure derived from colored noise.
//!
//! The temporal correlation is the normalized autocorrelation of noise with
//! power spectral density `1/f^β`, obtained by an inverse DFT of the PSD on a
//! `2H` grid and laid out as an `H × H` Toeplitz matrix. Across control
//! dimensions it is combined with a spatial correlation by a Kronecker
//! product; the symmetric square root of the result shapes standard-normal
//! samples.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CorrelationStructure {
    pub horizon: usize,
    pub control_dim: usize,
    pub beta: f64,
    pub temporal: DMatrix<f64>,
    pub spatial: DMatrix<f64>,
    /// `temporal ⊗ spatial`, indexed time-major like control sequences.
    pub full: DMatrix<f64>,
    /// Symmetric root with `root · rootᵀ = full`.
    pub root: DMatrix<f64>,
    /// Eigenvalues clipped when projecting the temporal matrix onto the PSD cone.
    pub clipped_eigenvalues: usize,
}

impl CorrelationStructure {
    /// Colored-noise temporal correlation with independent control dimensions.
    pub fn colored(horizon: usize, control_dim: usize, beta: f64) -> Result<Self> {
        if control_dim == 0 {
            return Err(Error::InvalidArgument {
                name: "control_dim",
                reason: "must be at least 1".into(),
            });
        }
        let (temporal, clipped_eigenvalues) = colored_noise_correlation_with_report(horizon, beta)?;
        let spatial = DMatrix::identity(control_dim, control_dim);
        let full = kronecker(&temporal, &spatial);
        let root = matrix_sqrt(&full)?;
        Ok(CorrelationStructure {
            horizon,
            control_dim,
            beta,
            temporal,
            spatial,
            full,
            root,
            clipped_eigenvalues,
        })
    }

    /// Process-wide cached instance for `(horizon, control_dim, beta)`.
    pub fn cached(horizon: usize, control_dim: usize, beta: f64) -> Result<Arc<Self>> {
        type Key = (usize, usize, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<CorrelationStructure>>>> = OnceLock::new();
        let key = (horizon, control_dim, beta.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(hit) = cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(Self::colored(horizon, control_dim, beta)?);
        cache.lock().unwrap().insert(key, Arc::clone(&built));
        Ok(built)
    }

    pub fn dim(&self) -> usize {
        self.horizon * self.control_dim
    }
}

/// `H × H` unit-diagonal Toeplitz autocorrelation of `1/f^β` noise.
pub fn colored_noise_correlation(horizon: usize, beta: f64) -> Result<DMatrix<f64>> {
    colored_noise_correlation_with_report(horizon, beta).map(|(m, _)| m)
}

fn colored_noise_correlation_with_report(horizon: usize, beta: f64) -> Result<(DMatrix<f64>, usize)> {
    if horizon == 0 {
        return Err(Error::InvalidArgument {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument {
            name: "beta",
            reason: format!("must be finite and nonnegative, got {beta}"),
        });
    }
    let acf = autocorrelation(horizon, beta);
    let toeplitz = DMatrix::from_fn(horizon, horizon, |i, j| acf[i.abs_diff(j)]);
    let (projected, clipped) = project_psd(&toeplitz);
    if clipped == 0 {
        return Ok((toeplitz, 0));
    }
    // Restore the unit diagonal after clipping (a congruence keeps it PSD).
    let d: Vec<f64> = projected.diagonal().iter().map(|v| v.max(f64::MIN_POSITIVE).sqrt()).collect();
    let normalized = DMatrix::from_fn(horizon, horizon, |i, j| projected[(i, j)] / (d[i] * d[j]));
    Ok((normalized, clipped))
}

/// Lags `0..horizon` of the normalized autocorrelation on a `2·horizon` grid.
/// The zero-frequency bin takes the value of the lowest nonzero bin.
fn autocorrelation(horizon: usize, beta: f64) -> Vec<f64> {
    let m = 2 * horizon;
    let psd: Vec<f64> = (0..m)
        .map(|k| {
            let bin = k.min(m - k).max(1);
            let f = bin as f64 / m as f64;
            f.powf(-beta)
        })
        .collect();
    let mut acf: Vec<f64> = (0..horizon)
        .map(|lag| {
            psd.iter()
                .enumerate()
                .map(|(k, p)| p * (2.0 * PI * (k * lag % m) as f64 / m as f64).cos())
                .sum::<f64>()
                / m as f64
        })
        .collect();
    let zero_lag = acf[0];
    for v in &mut acf {
        *v /= zero_lag;
    }
    acf[0] = 1.0;
    // Flat spectrum: exact delta instead of cosine-sum rounding noise.
    if beta == 0.0 {
        acf.iter_mut().skip(1).for_each(|v| *v = 0.0);
    }
    acf
}

/// Nearest PSD matrix in Frobenius norm by eigenvalue clipping; returns the
/// number of clipped eigenvalues.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if clipped == 0 {
        return (sym, 0);
    }
    let lambda = eig.eigenvalues.map(|l| l.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&lambda) * eig.eigenvectors.transpose();
    (out, clipped)
}

/// Standard Kronecker product.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Symmetric PSD square root via eigendecomposition.
pub fn matrix_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch {
            context: "matrix_sqrt: square input",
            expected: c.nrows(),
            actual: c.ncols(),
        });
    }
    let asymmetry = (c - c.transpose()).amax();
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -EIGEN_TOL {
        return Err(Error::NotPositiveSemidefinite { eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
