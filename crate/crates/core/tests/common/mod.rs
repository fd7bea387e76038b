//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use funcclust::gmm::{self, EmConfig, GmmParams};
use funcclust::simgen::{self, GeneratorConfig};
use funcclust::{adjusted_rand_index, allocate, project, Partition};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Runs simulate, project, fit and allocate; returns the ARI against the truth.
pub fn pipeline_ari(config: &GeneratorConfig, g: usize, em: &EmConfig) -> f64 {
    let sim = simgen::generate(config).expect("generate");
    let coeffs = project(&sim.data, &config.basis).expect("project");
    let report = gmm::fit(coeffs.values(), g, em).expect("fit");
    let labels = allocate(&report.responsibilities);
    adjusted_rand_index(&labels, &sim.truth).expect("ari")
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A Aᵀ + shift·I` with standard normal `A`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * shift
}

/// Random mixture whose means are spread on a scale of `spread`.
pub fn random_params<R: Rng>(rng: &mut R, g: usize, d: usize, spread: f64) -> GmmParams {
    let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..g).map(|_| normal_vec(rng, d) * spread).collect();
    let covs = (0..g).map(|_| random_spd(rng, d, 0.5)).collect();
    GmmParams::new(weights, means, covs).expect("valid params")
}

/// Draws `n` rows from a mixture.
pub fn sample_mixture<R: Rng>(rng: &mut R, params: &GmmParams, n: usize) -> DMatrix<f64> {
    let d = params.dim();
    let factors: Vec<DMatrix<f64>> = params
        .covariances()
        .iter()
        .map(|c| c.clone().cholesky().expect("spd").l())
        .collect();
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut c = params.g() - 1;
        for (k, w) in params.weights().iter().enumerate() {
            acc += w;
            if u < acc {
                c = k;
                break;
            }
        }
        let x = &params.means()[c] + &factors[c] * normal_vec(rng, d);
        out.row_mut(i).copy_from(&x.transpose());
    }
    out
}

/// Textbook Gaussian density with an explicit inverse and determinant.
pub fn naive_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let inv = cov.clone().try_inverse().expect("invertible");
    let diff = x - mean;
    let quad = (diff.transpose() * inv * &diff)[(0, 0)];
    (-0.5 * quad).exp() / ((2.0 * PI).powf(d / 2.0) * cov.determinant().sqrt())
}

/// Responsibilities and log-likelihood computed without any log-space tricks.
pub fn naive_e_step(data: &DMatrix<f64>, params: &GmmParams) -> (DMatrix<f64>, f64) {
    let (n, g) = (data.nrows(), params.g());
    let mut resp = DMatrix::zeros(n, g);
    let mut loglik = 0.0;
    for i in 0..n {
        let x = data.row(i).transpose();
        let dens: Vec<f64> = (0..g)
            .map(|c| {
                params.weights()[c]
                    * naive_density(&x, &params.means()[c], &params.covariances()[c])
            })
            .collect();
        let total: f64 = dens.iter().sum();
        for c in 0..g {
            resp[(i, c)] = dens[c] / total;
        }
        loglik += total.ln();
    }
    (resp, loglik)
}

/// Adjusted Rand index from an explicit loop over all pairs.
pub fn brute_force_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (n00 * n11 - n01 * n10) / den
}

pub fn random_labels<R: Rng>(rng: &mut R, n: usize, g: usize) -> Partition {
    let labels = (0..n).map(|_| rng.random_range(1..=g)).collect();
    Partition::new(labels, g).expect("labels in range")
}

pub fn s1(m: usize, n: usize, seed: u64) -> GeneratorConfig {
    simgen::s1_config(m, n, seed).expect("s1")
}

pub fn s2(m: usize, n: usize, seed: u64) -> GeneratorConfig {
    simgen::s2_config(m, n, seed).expect("s2")
}
