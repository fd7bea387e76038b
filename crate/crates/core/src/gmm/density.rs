use std::f64::consts::PI;

use nalgebra::Cholesky;

use super::GmmParams;
use crate::error::{Error, Result};

/// A mixture with every covariance factored as `Σ_c = L_c L_cᵀ`.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    d: usize,
    means: Vec<Vec<f64>>,
    /// Row-major lower-triangular Cholesky factors.
    chol: Vec<Vec<f64>>,
    /// `log π_c − ½ d log 2π − log det L_c`.
    offsets: Vec<f64>,
}

impl MixtureDensity {
    pub fn new(params: &GmmParams) -> Result<Self> {
        let d = params.dim();
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let mut means = Vec::with_capacity(params.g());
        let mut chol = Vec::with_capacity(params.g());
        let mut offsets = Vec::with_capacity(params.g());
        for (c, cov) in params.covariances().iter().enumerate() {
            let factor = Cholesky::new(cov.clone())
                .ok_or(Error::SingularCovariance { component: c })?;
            let l = factor.l();
            let mut flat = vec![0.0; d * d];
            let mut log_det = 0.0;
            for r in 0..d {
                for k in 0..=r {
                    flat[r * d + k] = l[(r, k)];
                }
                let diag = l[(r, r)];
                if !(diag > 0.0) || !diag.is_finite() {
                    return Err(Error::SingularCovariance { component: c });
                }
                log_det += diag.ln();
            }
            means.push(params.means()[c].iter().copied().collect());
            chol.push(flat);
            offsets.push(params.weights()[c].ln() - d as f64 * half_log_2pi - log_det);
        }
        Ok(Self {
            d,
            means,
            chol,
            offsets,
        })
    }

    pub fn g(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Fills `out[c] = log π_c + log φ(x; μ_c, Σ_c)`. `scratch` must hold `d` values.
    pub fn weighted_component_logs(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let d = self.d;
        for c in 0..self.g() {
            let l = &self.chol[c];
            let mu = &self.means[c];
            // Forward substitution L y = x − μ.
            let mut quad = 0.0;
            for r in 0..d {
                let row = &l[r * d..r * d + r];
                let mut acc = x[r] - mu[r];
                for (k, &lk) in row.iter().enumerate() {
                    acc -= lk * scratch[k];
                }
                let y = acc / l[r * d + r];
                scratch[r] = y;
                quad += y * y;
            }
            out[c] = self.offsets[c] - 0.5 * quad;
        }
    }

    /// `log f(x; ψ)` of the full mixture.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.d];
        let mut terms = vec![0.0; self.g()];
        self.weighted_component_logs(x, &mut scratch, &mut terms);
        log_sum_exp(&terms)
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Mixture log-density at a single point.
pub fn log_density(point: &[f64], params: &GmmParams) -> Result<f64> {
    if point.len() != params.dim() {
        return Err(Error::data(format!(
            "point has dimension {}, mixture has {}",
            point.len(),
            params.dim()
        )));
    }
    Ok(MixtureDensity::new(params)?.log_density(point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn one_d(weights: &[f64], means: &[f64], vars: &[f64]) -> GmmParams {
        GmmParams::new(
            weights.to_vec(),
            means.iter().map(|&m| DVector::from_element(1, m)).collect(),
            vars.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_mode() {
        let p = one_d(&[1.0], &[0.0], &[1.0]);
        let v = log_density(&[0.0], &p).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((v + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn identical_components_collapse() {
        let single = one_d(&[1.0], &[0.3], &[2.0]);
        let double = one_d(&[0.5, 0.5], &[0.3, 0.3], &[2.0, 2.0]);
        for x in [-1.0, 0.0, 2.5] {
            let a = log_density(&[x], &single).unwrap();
            let b = log_density(&[x], &double).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn equidistant_point_symmetry() {
        let a = 1.7;
        let p = one_d(&[0.5, 0.5], &[-a, a], &[1.0, 1.0]);
        let expected = -0.5 * (2.0 * PI).ln() - 0.5 * a * a;
        assert!((log_density(&[0.0], &p).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn matches_explicit_multivariate_formula() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let mu = DVector::from_column_slice(&[0.5, -1.0]);
        let p = GmmParams::new(vec![1.0], vec![mu.clone()], vec![cov.clone()]).unwrap();
        let x = DVector::from_column_slice(&[1.0, 0.25]);
        let diff = &x - &mu;
        let inv = cov.clone().try_inverse().unwrap();
        let quad = (diff.transpose() * inv * &diff)[(0, 0)];
        let expected = -(2.0 * PI).ln() - 0.5 * cov.determinant().ln() - 0.5 * quad;
        assert!((log_density(x.as_slice(), &p).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn singular_covariance_is_reported() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = GmmParams::new(vec![1.0], vec![DVector::zeros(2)], vec![cov]).unwrap();
        assert!(matches!(
            log_density(&[0.0, 0.0], &p),
            Err(Error::SingularCovariance { component: 0 })
        ));
    }
}
