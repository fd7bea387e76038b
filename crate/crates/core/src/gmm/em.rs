use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::density::{log_sum_exp, MixtureDensity};
use super::init::kmeans_plus_plus_init_rows;
use super::{EmConfig, FitReport, GmmParams, ResponsibilityMatrix, MAX_RIDGE};
use crate::error::{Error, Result};

/// Rows below this count are processed in one rayon task.
const ROWS_PER_TASK: usize = 256;

/// Row-major copy of an `n × d` data matrix.
pub(crate) struct Rows {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Rows {
    pub fn new(data: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = data.shape();
        if n == 0 || d == 0 {
            return Err(Error::data("coefficient matrix is empty"));
        }
        let mut flat = Vec::with_capacity(n * d);
        for i in 0..n {
            for k in 0..d {
                let v = data[(i, k)];
                if !v.is_finite() {
                    return Err(Error::data_at(i, Some(k), "coefficient is not finite"));
                }
                flat.push(v);
            }
        }
        Ok(Self { n, d, data: flat })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

pub(crate) fn e_step_rows(rows: &Rows, params: &GmmParams) -> Result<(ResponsibilityMatrix, f64)> {
    if params.dim() != rows.d {
        return Err(Error::data(format!(
            "data has dimension {}, mixture has {}",
            rows.d,
            params.dim()
        )));
    }
    let density = MixtureDensity::new(params)?;
    let g = params.g();
    let mut tau = vec![0.0; rows.n * g];
    let mut row_ll = vec![0.0; rows.n];
    tau.par_chunks_mut(g * ROWS_PER_TASK)
        .zip(row_ll.par_chunks_mut(ROWS_PER_TASK))
        .enumerate()
        .for_each(|(chunk, (tau_chunk, ll_chunk))| {
            let mut scratch = vec![0.0; rows.d];
            let start = chunk * ROWS_PER_TASK;
            for (k, (tau_row, ll)) in tau_chunk.chunks_exact_mut(g).zip(ll_chunk).enumerate() {
                density.weighted_component_logs(rows.row(start + k), &mut scratch, tau_row);
                let lse = log_sum_exp(tau_row);
                for t in tau_row.iter_mut() {
                    *t = (*t - lse).exp();
                }
                *ll = lse;
            }
        });
    // Sequential sum keeps the result independent of the thread count.
    let loglik = row_ll.iter().sum();
    Ok((ResponsibilityMatrix::from_flat(rows.n, g, tau), loglik))
}

/// Posterior responsibilities and the log-likelihood `Σ_i log f(b̃_i; ψ)`.
pub fn e_step(data: &DMatrix<f64>, params: &GmmParams) -> Result<(ResponsibilityMatrix, f64)> {
    e_step_rows(&Rows::new(data)?, params)
}

/// Adds `λ·tr(Σ)/d·I` with `λ` doubling from `ridge` until the matrix factors.
fn repair_covariance(cov: DMatrix<f64>, ridge: f64, component: usize) -> Result<DMatrix<f64>> {
    if Cholesky::new(cov.clone()).is_some() {
        return Ok(cov);
    }
    let d = cov.nrows();
    let scale = cov.trace() / d as f64;
    let mut lambda = ridge;
    while lambda <= MAX_RIDGE && scale > 0.0 {
        let mut repaired = cov.clone();
        for k in 0..d {
            repaired[(k, k)] += lambda * scale;
        }
        if Cholesky::new(repaired.clone()).is_some() {
            debug!("component {component}: covariance ridged with lambda = {lambda:e}");
            return Ok(repaired);
        }
        lambda *= 2.0;
    }
    Err(Error::SingularCovariance { component })
}

pub(crate) fn m_step_rows(rows: &Rows, resp: &ResponsibilityMatrix, ridge: f64) -> Result<GmmParams> {
    let (n, d, g) = (rows.n, rows.d, resp.g());
    if resp.nrows() != n {
        return Err(Error::data(format!(
            "{} responsibility rows for {n} data rows",
            resp.nrows()
        )));
    }
    let floor = 10.0 * f64::EPSILON * n as f64;
    let mut mass = vec![0.0; g];
    let mut sums = vec![0.0; g * d];
    for (i, tau) in resp.rows().enumerate() {
        let x = rows.row(i);
        for c in 0..g {
            mass[c] += tau[c];
            for k in 0..d {
                sums[c * d + k] += tau[c] * x[k];
            }
        }
    }
    if let Some(c) = mass.iter().position(|&m| !(m >= floor)) {
        return Err(Error::StarvedComponent {
            component: c,
            mass: mass[c],
        });
    }
    let means: Vec<Vec<f64>> = (0..g)
        .map(|c| (0..d).map(|k| sums[c * d + k] / mass[c]).collect())
        .collect();

    // Upper triangle only, mirrored afterwards so each Σ_c is exactly symmetric.
    let mut scatter = vec![0.0; g * d * d];
    let mut diff = vec![0.0; d];
    for (i, tau) in resp.rows().enumerate() {
        let x = rows.row(i);
        for c in 0..g {
            let w = tau[c];
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                diff[k] = x[k] - means[c][k];
            }
            let block = &mut scatter[c * d * d..(c + 1) * d * d];
            for r in 0..d {
                let wr = w * diff[r];
                for k in r..d {
                    block[r * d + k] += wr * diff[k];
                }
            }
        }
    }

    let total: f64 = mass.iter().sum();
    let weights = mass.iter().map(|m| m / total).collect();
    let mut covariances = Vec::with_capacity(g);
    for c in 0..g {
        let block = &scatter[c * d * d..(c + 1) * d * d];
        let cov = DMatrix::from_fn(d, d, |r, k| {
            let (a, b) = if r <= k { (r, k) } else { (k, r) };
            block[a * d + b] / mass[c]
        });
        covariances.push(repair_covariance(cov, ridge, c)?);
    }
    Ok(GmmParams::from_parts_unchecked(
        weights,
        means.into_iter().map(DVector::from_vec).collect(),
        covariances,
    ))
}

/// Weighted-moment parameter update from responsibilities.
pub fn m_step(data: &DMatrix<f64>, resp: &ResponsibilityMatrix, ridge: f64) -> Result<GmmParams> {
    m_step_rows(&Rows::new(data)?, resp, ridge)
}

/// State handed to an observer after every E-step of a run.
#[derive(Debug)]
pub struct IterationState<'a> {
    /// Number of M-steps performed so far (0 for the initial E-step).
    pub iteration: usize,
    pub params: &'a GmmParams,
    pub responsibilities: &'a ResponsibilityMatrix,
    pub loglik: f64,
    /// False when the step decreased the log-likelihood and was discarded.
    pub accepted: bool,
}

/// Result of a single EM run from a fixed starting point.
#[derive(Debug, Clone)]
pub struct EmRun {
    pub params: GmmParams,
    pub responsibilities: ResponsibilityMatrix,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn run_em(data: &DMatrix<f64>, init: GmmParams, config: &EmConfig) -> Result<EmRun> {
    run_em_observed(data, init, config, |_| {})
}

/// EM from `init`, stopping once the log-likelihood gain drops below `tol`.
///
/// A step whose log-likelihood falls by more than `1e-8·(1 + |ℓ|)` (possible
/// only after a ridge repair) is discarded and the run stops at the previous
/// iterate, so the returned trace is monotone.
pub fn run_em_observed<F>(
    data: &DMatrix<f64>,
    init: GmmParams,
    config: &EmConfig,
    observer: F,
) -> Result<EmRun>
where
    F: FnMut(&IterationState<'_>),
{
    let rows = Rows::new(data)?;
    run_em_rows(&rows, init, config, observer)
}

pub(crate) fn run_em_rows<F>(
    rows: &Rows,
    init: GmmParams,
    config: &EmConfig,
    mut observer: F,
) -> Result<EmRun>
where
    F: FnMut(&IterationState<'_>),
{
    let mut params = init;
    let (mut resp, mut loglik) = e_step_rows(rows, &params)?;
    observer(&IterationState {
        iteration: 0,
        params: &params,
        responsibilities: &resp,
        loglik,
        accepted: true,
    });
    let mut trace = vec![loglik];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        let next = m_step_rows(rows, &resp, config.ridge)?;
        let (next_resp, next_loglik) = e_step_rows(rows, &next)?;
        iterations += 1;
        let slack = 1e-8 * (1.0 + loglik.abs());
        let accepted = next_loglik >= loglik - slack;
        observer(&IterationState {
            iteration: iterations,
            params: &next,
            responsibilities: &next_resp,
            loglik: next_loglik,
            accepted,
        });
        if !accepted {
            debug!("EM step decreased log-likelihood ({loglik} -> {next_loglik}); stopping");
            converged = true;
            break;
        }
        let gain = next_loglik - loglik;
        params = next;
        resp = next_resp;
        loglik = next_loglik;
        trace.push(loglik);
        if gain < config.tol {
            converged = true;
            break;
        }
    }
    Ok(EmRun {
        params,
        responsibilities: resp,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

/// RNG for restart `index`: the master seed with one ChaCha stream per restart.
pub(crate) fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Best-of-restarts EM fit of a `g`-component mixture.
///
/// Each restart seeds its own k-means++ initialization; the highest final
/// log-likelihood wins, with exact ties going to the lowest restart index.
/// Restarts run in parallel but the result does not depend on scheduling.
pub fn fit(data: &DMatrix<f64>, g: usize, config: &EmConfig) -> Result<FitReport> {
    let rows = Rows::new(data)?;
    if g == 0 || g > rows.n {
        return Err(Error::Config(format!(
            "component count must lie in 1..={}, got {g}",
            rows.n
        )));
    }
    if config.restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    if !(config.tol >= 0.0) || !(config.ridge > 0.0) {
        return Err(Error::Config("tol must be non-negative and ridge positive".into()));
    }
    if rows.d > rows.n {
        warn!("dimension {} exceeds sample size {}", rows.d, rows.n);
    }

    let runs: Vec<Result<EmRun>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(config.seed, r);
            let init = kmeans_plus_plus_init_rows(&rows, g, &mut rng, config.ridge)?;
            run_em_rows(&rows, init, config, |_| {})
        })
        .collect();

    let mut best: Option<(usize, EmRun)> = None;
    let mut diagnostics = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                let ll = *run.loglik_trace.last().expect("non-empty trace");
                let better = match &best {
                    None => true,
                    Some((_, b)) => ll > *b.loglik_trace.last().expect("non-empty trace"),
                };
                if better {
                    best = Some((r, run));
                }
            }
            Err(e) => {
                debug!("restart {r} failed: {e}");
                diagnostics.push(format!("restart {r}: {e}"));
            }
        }
    }
    let (restart_index, run) = best.ok_or(Error::FitFailed { diagnostics })?;
    Ok(FitReport {
        params: run.params,
        loglik_trace: run.loglik_trace,
        iterations: run.iterations,
        converged: run.converged,
        restart_index,
        responsibilities: run.responsibilities,
        seed: config.seed,
    })
}
