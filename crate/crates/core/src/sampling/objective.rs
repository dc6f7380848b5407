//! Modified Cramér–von Mises objective and its gradient-descent minimizer.
//!
//! Localized cumulative distributions use the Gaussian kernel
//! `exp(-½‖x − m‖²/b²)` with weighting `b^{1-d}` over kernel widths
//! `b ∈ [0, b_max]`. Against `N(0, I)` the distance splits into
//!
//! ```text
//! D = D1 − 2·D2 + D3            (all scaled by π^{-d/2})
//! D1 = ∫ b (b²/(1+b²))^{d/2} db
//! D2 = Σ_i w ∫ b (2b²/(1+2b²))^{d/2} exp(−½‖x_i‖²/(1+2b²)) db
//! D3 = ½ Σ_{i,j} w² [S e^{−c_ij/S} − c_ij E1(c_ij/S)],  c_ij = ‖x_i − x_j‖²/4, S = b_max²
//! ```
//!
//! `D1` and `D2` are evaluated by composite Gauss–Legendre quadrature, `D3`
//! in closed form.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{moment_errors, Provenance, SamplePool};
use crate::special::{exp_int_e1, gauss_legendre};
use crate::{Error, Result};

const QUADRATURE_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Seed of the initial point placement.
    pub seed: u64,
    pub max_iterations: usize,
    /// Upper end of the kernel-width integral.
    pub kernel_width_max: f64,
    pub quadrature_panels: usize,
    /// Stop once `count · ‖∇D‖_∞` falls below this.
    pub grad_tol: f64,
    /// Start from point pairs `±x` (and the origin for odd counts).
    pub antithetic: bool,
    /// Re-center and whiten the optimized points so the first two sample
    /// moments match `N(0, I)` exactly (whitening needs `count > dim`).
    pub moment_correction: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            seed: 0x5eed,
            max_iterations: 5000,
            kernel_width_max: 20.0,
            quadrature_panels: 32,
            grad_tol: 1e-7,
            antithetic: false,
            moment_correction: true,
        }
    }
}

pub(super) struct Objective {
    dim: usize,
    weight: f64,
    s: f64,
    d1: f64,
    // D2 quadrature: Σ_q node_weight[q] · exp(−½ r² · h[q])
    node_weight: Vec<f64>,
    h: Vec<f64>,
}

impl Objective {
    pub(super) fn new(dim: usize, count: usize, kernel_width_max: f64, panels: usize) -> Self {
        let (z, w) = gauss_legendre(QUADRATURE_ORDER);
        let half_d = dim as f64 / 2.0;
        let width = kernel_width_max / panels as f64;
        let mut node_weight = Vec::with_capacity(panels * QUADRATURE_ORDER);
        let mut h = Vec::with_capacity(panels * QUADRATURE_ORDER);
        let mut d1 = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (zq, wq) in z.iter().zip(&w) {
                let b = mid + 0.5 * width * zq;
                let jac = 0.5 * width * wq;
                let b2 = b * b;
                d1 += jac * b * (half_d * (b2 / (1.0 + b2)).ln()).exp();
                node_weight.push(jac * b * (half_d * (2.0 * b2 / (1.0 + 2.0 * b2)).ln()).exp());
                h.push(1.0 / (1.0 + 2.0 * b2));
            }
        }
        Objective {
            dim,
            weight: 1.0 / count as f64,
            s: kernel_width_max * kernel_width_max,
            d1,
            node_weight,
            h,
        }
    }

    fn radial(&self, r2: f64) -> (f64, f64) {
        // (∫ ..., d/d(r²) ∫ ...)
        let mut value = 0.0;
        let mut slope = 0.0;
        for (nw, h) in self.node_weight.iter().zip(&self.h) {
            let e = nw * (-0.5 * r2 * h).exp();
            value += e;
            slope -= 0.5 * h * e;
        }
        (value, slope)
    }

    fn pair(&self, c: f64) -> f64 {
        if c == 0.0 {
            self.s
        } else {
            self.s * (-c / self.s).exp() - c * exp_int_e1(c / self.s)
        }
    }

    fn diagonal(&self, count: usize) -> f64 {
        0.5 * self.weight * self.weight * count as f64 * self.s
    }

    /// Objective and gradient at row-major points `x` (`count × dim`).
    pub(super) fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        let n = x.len() / d;
        let w = self.weight;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = self.d1 + self.diagonal(n);
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            let r2: f64 = xi.iter().map(|v| v * v).sum();
            let (t, slope) = self.radial(r2);
            value -= 2.0 * w * t;
            let gi = &mut grad[i * d..(i + 1) * d];
            for (g, v) in gi.iter_mut().zip(xi) {
                *g -= 2.0 * w * slope * 2.0 * v;
            }
        }
        let w2 = w * w;
        for i in 0..n {
            for j in (i + 1)..n {
                let (xi, xj) = (&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
                let c: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 4.0;
                value += w2 * self.pair(c);
                if c > 0.0 {
                    let coef = -0.5 * w2 * exp_int_e1(c / self.s);
                    for k in 0..d {
                        let diff = coef * (x[i * d + k] - x[j * d + k]);
                        grad[i * d + k] += diff;
                        grad[j * d + k] -= diff;
                    }
                }
            }
        }
        value
    }

    pub(super) fn value(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; x.len()];
        self.value_and_grad(x, &mut scratch)
    }
}

/// Sum of squares that depends only on the multiset of inputs.
fn canonical_sum_sq(values: impl Iterator<Item = f64>) -> f64 {
    let mut sq: Vec<f64> = values.map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    sq.iter().sum()
}

/// Objective value of a `count × dim` sample matrix, invariant under column
/// permutations bit for bit.
pub(super) fn canonical_distance(samples: &DMatrix<f64>, kernel_width_max: f64) -> f64 {
    let (n, d) = samples.shape();
    let obj = Objective::new(d, n, kernel_width_max, OptimizerConfig::default().quadrature_panels);
    let w = obj.weight;
    let mut value = obj.d1 + obj.diagonal(n);
    for i in 0..n {
        let r2 = canonical_sum_sq(samples.row(i).iter().copied());
        value -= 2.0 * w * obj.radial(r2).0;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let c = canonical_sum_sq((0..d).map(|k| samples[(i, k)] - samples[(j, k)])) / 4.0;
            value += w * w * obj.pair(c);
        }
    }
    value
}

fn initial_points(dim: usize, count: usize, config: &OptimizerConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = vec![0.0; dim * count];
    if config.antithetic {
        for i in 0..count / 2 {
            for k in 0..dim {
                let v: f64 = StandardNormal.sample(&mut rng);
                x[2 * i * dim + k] = v;
                x[(2 * i + 1) * dim + k] = -v;
            }
        }
    } else {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    x
}

/// Centers the columns and, when `count > dim`, applies the symmetric
/// whitening `X ← X · Σ^{-1/2}`.
fn correct_moments(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    let dim = x.ncols();
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    if n <= dim {
        return;
    }
    let cov = x.transpose() * &*x / n as f64;
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.iter().any(|&l| l <= 1e-12) {
        return;
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let whitening = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    *x = &*x * whitening;
}

/// Places `count` points in `dim` dimensions approximating `N(0, I)`.
///
/// Deterministic given `config`. On an exhausted iteration budget the best
/// pool found is returned inside [`Error::NotConverged`].
pub fn generate_pool(dim: usize, count: usize, config: &OptimizerConfig) -> Result<SamplePool> {
    if dim == 0 {
        return Err(Error::InvalidArgument {
            name: "dim",
            reason: "must be at least 1".into(),
        });
    }
    if count < 2 {
        return Err(Error::InvalidArgument {
            name: "count",
            reason: "must be at least 2".into(),
        });
    }
    if !(config.kernel_width_max > 0.0) || config.quadrature_panels == 0 {
        return Err(Error::InvalidArgument {
            name: "optimizer_config",
            reason: "kernel_width_max and quadrature_panels must be positive".into(),
        });
    }

    let obj = Objective::new(dim, count, config.kernel_width_max, config.quadrature_panels);
    let mut x = initial_points(dim, count, config);
    let mut grad = vec![0.0; x.len()];
    let mut f = obj.value_and_grad(&x, &mut grad);
    let mut trial = vec![0.0; x.len()];
    let mut trial_grad = vec![0.0; x.len()];

    let grad_norm = |g: &[f64]| g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * count as f64;
    let mut step = 0.1 / grad_norm(&grad).max(1e-12) * count as f64;
    let mut converged = grad_norm(&grad) <= config.grad_tol;
    let mut iterations = 0;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let g2: f64 = grad.iter().map(|v| v * v).sum();
        // Armijo backtracking along the negative gradient.
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, xv), gv) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = xv - step * gv;
            }
            let f_trial = obj.value_and_grad(&trial, &mut trial_grad);
            // Strict, so rounding-level plateaus count as stationary.
            if f_trial < f - 1e-4 * step * g2 {
                // Barzilai–Borwein step for the next iteration.
                let mut sy = 0.0;
                let mut ss = 0.0;
                for k in 0..x.len() {
                    let s = trial[k] - x[k];
                    sy += s * (trial_grad[k] - grad[k]);
                    ss += s * s;
                }
                step = if sy > 0.0 { ss / sy } else { step * 2.0 };
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                f = f_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        // No descent possible at machine precision: stationary.
        converged = !accepted || grad_norm(&grad) <= config.grad_tol;
    }

    let raw = DMatrix::from_row_slice(count, dim, &x);
    let (raw_mean_error, raw_cov_error) = moment_errors(&raw);
    let mut samples = raw;
    if config.moment_correction {
        correct_moments(&mut samples);
    }
    let (mean_error, cov_error) = moment_errors(&samples);
    let provenance = Provenance {
        method: "modified-cvm-gradient-descent".into(),
        seed: config.seed,
        optimizer_iterations: iterations,
        converged,
        kernel_width_max: config.kernel_width_max,
        objective: obj.value(&x),
        raw_mean_error,
        raw_cov_error,
        mean_error,
        cov_error,
        moment_correction: config.moment_correction,
    };
    let pool = SamplePool::new(samples, provenance)?;
    if converged {
        Ok(pool)
    } else {
        let quality = pool.quality();
        Err(Error::NotConverged {
            iterations,
            best: Box::new(pool),
            quality,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let (dim, count) = (3, 6);
        let obj = Objective::new(dim, count, 5.0, 8);
        let config = OptimizerConfig::default();
        let x = initial_points(dim, count, &config);
        let mut grad = vec![0.0; x.len()];
        obj.value_and_grad(&x, &mut grad);
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7 * (1.0 + fd.abs()), "k={k}: fd={fd} grad={}", grad[k]);
        }
    }

    #[test]
    fn pair_term_matches_quadrature() {
        // ½ ∫_0^S e^{-c/s} ds over s = b², the closed form of the pair term.
        let obj = Objective::new(2, 2, 3.0, 4);
        let (z, w) = gauss_legendre(32);
        for &c in &[0.0, 0.01, 0.7, 5.0] {
            let mut acc = 0.0;
            let panels = 100;
            for p in 0..panels {
                // graded towards s = 0, where e^{-c/s} has a boundary layer
                let lo = obj.s * (p as f64 / panels as f64).powi(3);
                let hi = obj.s * ((p + 1) as f64 / panels as f64).powi(3);
                for (zq, wq) in z.iter().zip(&w) {
                    let s = 0.5 * (hi - lo) * zq + 0.5 * (hi + lo);
                    acc += 0.5 * (hi - lo) * wq * (-c / s).exp();
                }
            }
            assert!((acc - obj.pair(c)).abs() < 1e-9, "c={c}");
        }
    }

    #[test]
    fn symmetric_pair_in_one_dimension() {
        let config = OptimizerConfig {
            antithetic: true,
            moment_correction: false,
            ..OptimizerConfig::default()
        };
        let pool = generate_pool(1, 2, &config).unwrap();
        let a = pool.samples()[(0, 0)];
        let b = pool.samples()[(1, 0)];
        assert!(a.abs() > 0.1);
        assert_eq!(a, -b);
        assert_eq!(pool.quality().mean_error, 0.0);
    }

    #[test]
    fn optimization_reduces_distance() {
        let config = OptimizerConfig {
            moment_correction: false,
            ..OptimizerConfig::default()
        };
        let x0 = initial_points(2, 25, &config);
        let obj = Objective::new(2, 25, config.kernel_width_max, config.quadrature_panels);
        let pool = generate_pool(2, 25, &config).unwrap();
        assert!(pool.provenance().objective < obj.value(&x0));
        assert!(pool.provenance().converged);
    }

    #[test]
    fn exhausted_budget_reports_best_pool() {
        let config = OptimizerConfig {
            max_iterations: 2,
            grad_tol: 0.0,
            ..OptimizerConfig::default()
        };
        match generate_pool(3, 10, &config) {
            Err(Error::NotConverged { iterations, best, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.count(), 10);
                assert_eq!(best.dim(), 3);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn rejects_degenerate_arguments() {
        let config = OptimizerConfig::default();
        assert!(generate_pool(0, 5, &config).is_err());
        assert!(generate_pool(2, 1, &config).is_err());
    }
}
