//! Gaussian mixture models over coefficient vectors, fitted by EM.
//!
//! Every component carries an unconstrained full covariance. Densities are
//! evaluated through Cholesky factors and responsibilities in log space.

mod density;
mod em;
mod init;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub use density::{log_density, MixtureDensity};
pub use em::{e_step, fit, m_step, run_em, run_em_observed, EmRun, IterationState};
pub use init::kmeans_plus_plus_init;

/// Mixture parameters: weights `π_c`, means `μ_c` and covariances `Σ_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl GmmParams {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(Error::Config("a mixture needs at least one component".into()));
        }
        if means.len() != g || covariances.len() != g {
            return Err(Error::Config(format!(
                "expected {g} means and covariances, got {} and {}",
                means.len(),
                covariances.len()
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Config("component dimension must be positive".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        for (c, (mu, cov)) in means.iter().zip(&covariances).enumerate() {
            if mu.len() != d || cov.shape() != (d, d) {
                return Err(Error::Config(format!("component {c} has inconsistent dimensions")));
            }
            if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("component {c} has non-finite parameters")));
            }
            let scale = cov.abs().max().max(f64::MIN_POSITIVE);
            if (cov - cov.transpose()).abs().max() > 1e-12 * scale {
                return Err(Error::Config(format!("covariance {c} is not symmetric")));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub(crate) fn from_parts_unchecked(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Self {
        Self {
            weights,
            means,
            covariances,
        }
    }

    pub fn g(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Reorders components so that new component `k` is old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.g(), "permutation length must equal g");
        Self {
            weights: perm.iter().map(|&c| self.weights[c]).collect(),
            means: perm.iter().map(|&c| self.means[c].clone()).collect(),
            covariances: perm.iter().map(|&c| self.covariances[c].clone()).collect(),
        }
    }
}

/// Posterior membership probabilities `τ_ic`, stored row-major (`n × g`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix {
    n: usize,
    g: usize,
    values: Vec<f64>,
}

impl ResponsibilityMatrix {
    /// Validates that every row is a probability vector (sums to 1 within 1e-10).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let g = rows.first().map_or(0, Vec::len);
        if n == 0 || g == 0 {
            return Err(Error::data("responsibility matrix must be non-empty"));
        }
        let mut values = Vec::with_capacity(n * g);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != g {
                return Err(Error::data_at(i, None, "ragged responsibility row"));
            }
            if row.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
                return Err(Error::data_at(i, None, "responsibility outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::data_at(i, None, format!("row sums to {sum}")));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { n, g, values })
    }

    pub(crate) fn from_flat(n: usize, g: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * g);
        Self { n, g, values }
    }

    /// One-hot rows from 0-based component indices.
    pub fn one_hot(labels: &[usize], g: usize) -> Self {
        let mut values = vec![0.0; labels.len() * g];
        for (i, &c) in labels.iter().enumerate() {
            values[i * g + c] = 1.0;
        }
        Self {
            n: labels.len(),
            g,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.g..(i + 1) * self.g]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.g)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.g, &self.values)
    }
}

/// EM settings. `tol` is the absolute log-likelihood increment below which
/// a run is declared converged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Initial ridge multiplier used when a covariance fails to factor.
    pub ridge: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 0.01,
            max_iter: 500,
            restarts: 10,
            seed: 0,
            ridge: 1e-6,
        }
    }
}

/// Largest ridge multiplier tried before a covariance is declared singular.
pub const MAX_RIDGE: f64 = 1e-2;

/// Best-of-restarts EM result.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: GmmParams,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub responsibilities: ResponsibilityMatrix,
    pub seed: u64,
}

impl FitReport {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the initial log-likelihood")
    }
}
