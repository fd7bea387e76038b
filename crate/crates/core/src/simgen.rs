//! Seeded generators for mixtures of random-coefficient functions.
//!
//! Function `i` draws its component, its coefficient vector
//! `B_i ~ N(μ_c, V_c)` and its observation noise from its own ChaCha8 stream
//! (master seed, stream `i`), so output never depends on generation order.
//! Within a stream the draws come in that order: component (weighted mode
//! only), then `d` coefficient normals, then `m` noise normals.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, DesignMatrix, SampleGrid};
use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::projection::FunctionalDataset;

/// How functions are assigned to components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Round-robin: function `i` belongs to component `i mod g`.
    EqualCounts,
    /// Independent categorical draws with these probabilities.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub basis: BasisSystem,
    pub grid: SampleGrid,
    pub n: usize,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub assignment: Assignment,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub data: FunctionalDataset,
    pub truth: Partition,
    pub true_coeffs: DMatrix<f64>,
}

pub const S1_GRID_SIZES: [usize; 4] = [10, 20, 50, 100];
pub const S1_SAMPLE_SIZES: [usize; 4] = [30, 60, 150, 300];
pub const S2_GRID_SIZES: [usize; 4] = [50, 100, 200, 500];
pub const S2_SAMPLE_SIZES: [usize; 4] = [250, 500, 1000, 2500];

fn diagonal(d: usize, value: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|r| (0..d).map(|k| if r == k { value } else { 0.0 }).collect())
        .collect()
}

fn unit(d: usize, k: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[k] = sign;
    v
}

/// Three quartic-polynomial populations on `[-1, 1]`, `V_c = 0.05²·I`, `σ = 0.1`.
pub fn s1_config(m: usize, n: usize, seed: u64) -> Result<GeneratorConfig> {
    if !S1_GRID_SIZES.contains(&m) || !S1_SAMPLE_SIZES.contains(&n) {
        warn!("S1 scenario (m = {m}, n = {n}) is outside the reference design");
    }
    let d = 5;
    Ok(GeneratorConfig {
        basis: BasisSystem::monomial(d, -1.0, 1.0)?,
        grid: SampleGrid::uniform(-1.0, 1.0, m)?,
        n,
        means: vec![vec![0.0; d], unit(d, 1, 1.0), unit(d, 1, -1.0)],
        covariances: vec![diagonal(d, 0.0025); 3],
        assignment: Assignment::EqualCounts,
        noise_sd: 0.1,
        seed,
    })
}

/// Five trigonometric populations on `[0, 2π]`, `V_c = 0.25²·I`, `σ = 0.5`.
pub fn s2_config(m: usize, n: usize, seed: u64) -> Result<GeneratorConfig> {
    if !S2_GRID_SIZES.contains(&m) || !S2_SAMPLE_SIZES.contains(&n) {
        warn!("S2 scenario (m = {m}, n = {n}) is outside the reference design");
    }
    let d = 9;
    Ok(GeneratorConfig {
        basis: BasisSystem::fourier(d, 0.0, 2.0 * PI)?,
        grid: SampleGrid::uniform(0.0, 2.0 * PI, m)?,
        n,
        means: vec![
            vec![0.0; d],
            unit(d, 0, 1.0),
            unit(d, 0, -1.0),
            unit(d, 1, 1.0),
            unit(d, 1, -1.0),
        ],
        covariances: vec![diagonal(d, 0.0625); 5],
        assignment: Assignment::EqualCounts,
        noise_sd: 0.5,
        seed,
    })
}

/// Symmetric square root factor `A` with `A Aᵀ = V`; rejects non-PSD `V`.
fn covariance_factor(cov: &[Vec<f64>], d: usize, c: usize) -> Result<DMatrix<f64>> {
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("covariance {c} must be {d} x {d}")));
    }
    let v = DMatrix::from_fn(d, d, |r, k| cov[r][k]);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("covariance {c} has non-finite entries")));
    }
    let scale = v.abs().max();
    if (&v - v.transpose()).abs().max() > 1e-12 * scale.max(1.0) {
        return Err(Error::Config(format!("covariance {c} is not symmetric")));
    }
    let eig = v.symmetric_eigen();
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    if let Some(&low) = eig.eigenvalues.iter().find(|&&l| l < -tol) {
        return Err(Error::Config(format!(
            "covariance {c} is not positive semi-definite (eigenvalue {low:e})"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

impl GeneratorConfig {
    pub fn g(&self) -> usize {
        self.means.len()
    }

    fn validate(&self) -> Result<Vec<DMatrix<f64>>> {
        let d = self.basis.dim();
        let g = self.g();
        if g == 0 {
            return Err(Error::Config("at least one component is required".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::Config("noise_sd must be a finite non-negative number".into()));
        }
        if self.covariances.len() != g {
            return Err(Error::Config(format!(
                "{g} means but {} covariances",
                self.covariances.len()
            )));
        }
        if let Some(c) = self.means.iter().position(|m| m.len() != d) {
            return Err(Error::Config(format!("mean {c} must have length {d}")));
        }
        if let Assignment::Weighted(w) = &self.assignment {
            if w.len() != g || w.iter().any(|&p| !(p >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::Config("weights must be g non-negative numbers".into()));
            }
        }
        self.covariances
            .iter()
            .enumerate()
            .map(|(c, cov)| covariance_factor(cov, d, c))
            .collect()
    }
}

fn draw_component(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (c, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return c;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn generate(config: &GeneratorConfig) -> Result<LabeledDataset> {
    let factors = config.validate()?;
    let design = DesignMatrix::build(&config.basis, &config.grid)?;
    let (n, d, m, g) = (config.n, config.basis.dim(), config.grid.len(), config.g());
    if matches!(config.assignment, Assignment::EqualCounts) && n % g != 0 {
        warn!("n = {n} is not divisible by g = {g}; lower components receive one extra function");
    }
    let means: Vec<DVector<f64>> = config
        .means
        .iter()
        .map(|mu| DVector::from_column_slice(mu))
        .collect();

    let draws: Vec<(usize, DVector<f64>, DVector<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let c = match &config.assignment {
                Assignment::EqualCounts => i % g,
                Assignment::Weighted(w) => draw_component(&mut rng, w),
            };
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let coeffs = &means[c] + &factors[c] * z;
            let mut values = design.values() * &coeffs;
            for v in values.iter_mut() {
                *v += config.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
            (c, coeffs, values)
        })
        .collect();

    let mut labels = Vec::with_capacity(n);
    let mut true_coeffs = DMatrix::zeros(n, d);
    let mut values = DMatrix::zeros(n, m);
    for (i, (c, coeffs, row)) in draws.into_iter().enumerate() {
        labels.push(c + 1);
        true_coeffs.set_row(i, &coeffs.transpose());
        values.set_row(i, &row.transpose());
    }
    Ok(LabeledDataset {
        data: FunctionalDataset::rectangular(config.grid.clone(), values)?,
        truth: Partition::new(labels, g)?,
        true_coeffs,
    })
}
