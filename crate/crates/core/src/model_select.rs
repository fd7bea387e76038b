//! Choosing the number of mixture components.
//!
//! Both criteria penalize the negative log-likelihood by the free-parameter
//! count `Pen(g) = g(1 + d + d(d+1)/2) − 1` of a full-covariance mixture:
//!
//! - slope heuristic: `−ℓ_n/n + κ·Pen(g)`, where `κ = 2ŝ` and `ŝ` is the OLS
//!   slope of `ℓ_n/n` against `Pen(g)` over the largest values of `g`
//!   (or `κ` is supplied directly);
//! - BIC: `−2ℓ_n + Pen(g)·log n`.
//!
//! In both cases the smallest `g` attaining the minimum is chosen.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::{self, EmConfig, FitReport};

/// Number of free parameters of a `g`-component, `d`-dimensional full-covariance mixture.
pub fn penalty_dim(g: usize, d: usize) -> u64 {
    assert!(g >= 1 && d >= 1, "penalty_dim needs g >= 1 and d >= 1");
    let (g, d) = (g as u64, d as u64);
    g * (1 + d + d * (d + 1) / 2) - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Slope { kappa: f64 },
    Bic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub g: usize,
    pub loglik: f64,
    pub penalty: u64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    pub method: Method,
    pub chosen_g: usize,
}

fn sorted_input(table_input: &[(usize, f64)]) -> Result<Vec<(usize, f64)>> {
    if table_input.is_empty() {
        return Err(Error::InsufficientData("criterion table is empty".into()));
    }
    let mut rows = table_input.to_vec();
    rows.sort_by_key(|r| r.0);
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::data("duplicate g in criterion table"));
    }
    if let Some(r) = rows.iter().find(|r| r.0 == 0 || !r.1.is_finite()) {
        return Err(Error::data(format!("invalid criterion row (g = {}, loglik = {})", r.0, r.1)));
    }
    Ok(rows)
}

fn build_table<F>(rows: Vec<(usize, f64)>, d: usize, method: Method, criterion: F) -> SelectionTable
where
    F: Fn(f64, u64) -> f64,
{
    let rows: Vec<SelectionRow> = rows
        .into_iter()
        .map(|(g, loglik)| {
            let penalty = penalty_dim(g, d);
            SelectionRow {
                g,
                loglik,
                penalty,
                criterion: criterion(loglik, penalty),
            }
        })
        .collect();
    let mut best = 0;
    for (k, row) in rows.iter().enumerate() {
        if row.criterion < rows[best].criterion {
            best = k;
        }
    }
    SelectionTable {
        chosen_g: rows[best].g,
        rows,
        method,
    }
}

/// Default slope window: the larger half of the `g` values, at least three.
pub fn default_fit_window(rows: usize) -> usize {
    rows.div_ceil(2).max(3)
}

/// OLS slope `ŝ` of `ℓ_n/n` against `Pen(g)` over the `fit_window` largest `g`.
pub fn estimate_slope(rows: &[(usize, f64)], d: usize, n: usize, fit_window: usize) -> Result<f64> {
    if fit_window < 3 {
        return Err(Error::Config("slope fit window must be at least 3".into()));
    }
    let rows = sorted_input(rows)?;
    if rows.len() < fit_window {
        return Err(Error::InsufficientData(format!(
            "slope fit needs {fit_window} rows, got {}",
            rows.len()
        )));
    }
    let tail = &rows[rows.len() - fit_window..];
    let xs: Vec<f64> = tail.iter().map(|&(g, _)| penalty_dim(g, d) as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|&(_, ll)| ll / n as f64).collect();
    let k = fit_window as f64;
    let x_bar = xs.iter().sum::<f64>() / k;
    let y_bar = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    Ok(sxy / sxx)
}

/// Slope-heuristic criterion. With `kappa_override` set, no slope is estimated.
pub fn slope_criterion(
    table_input: &[(usize, f64)],
    d: usize,
    n: usize,
    fit_window: Option<usize>,
    kappa_override: Option<f64>,
) -> Result<SelectionTable> {
    let rows = sorted_input(table_input)?;
    let kappa = match kappa_override {
        Some(kappa) => kappa,
        None => {
            let window = fit_window.unwrap_or_else(|| default_fit_window(rows.len()));
            let slope = estimate_slope(&rows, d, n, window)?;
            if !(slope > 0.0) {
                return Err(Error::SlopeEstimation(slope));
            }
            2.0 * slope
        }
    };
    let n = n as f64;
    Ok(build_table(rows, d, Method::Slope { kappa }, |ll, pen| {
        -ll / n + kappa * pen as f64
    }))
}

pub fn bic_criterion(table_input: &[(usize, f64)], d: usize, n: usize) -> Result<SelectionTable> {
    let rows = sorted_input(table_input)?;
    let log_n = (n as f64).ln();
    Ok(build_table(rows, d, Method::Bic, |ll, pen| -2.0 * ll + pen as f64 * log_n))
}

/// Seed for the fit at `g`, derived from the master seed (SplitMix64 finalizer).
pub fn seed_for_g(master: u64, g: usize) -> u64 {
    let mut z = master.wrapping_add((g as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Successful fits sorted by `g`.
    pub fits: Vec<FitReport>,
    /// `g` values whose every restart failed, with the reason.
    pub failed: Vec<(usize, String)>,
}

impl SweepResult {
    pub fn table_input(&self) -> Vec<(usize, f64)> {
        self.fits.iter().map(|f| (f.params.g(), f.loglik())).collect()
    }

    pub fn fit_for(&self, g: usize) -> Option<&FitReport> {
        self.fits.iter().find(|f| f.params.g() == g)
    }
}

fn fit_at(data: &DMatrix<f64>, g: usize, config: &EmConfig, restarts: usize) -> Result<FitReport> {
    let cfg = EmConfig {
        seed: seed_for_g(config.seed, g),
        restarts,
        ..*config
    };
    gmm::fit(data, g, &cfg)
}

/// Fits every `g` in `g_range`.
///
/// Failed values are skipped with a warning. When the log-likelihood drops
/// from one `g` to the next (beyond `1e-6·(1 + |ℓ|)`), that `g` is refitted
/// once with twice the restarts; the doubled run repeats the original
/// restarts, so it can only improve.
pub fn sweep(
    data: &DMatrix<f64>,
    g_range: impl IntoIterator<Item = usize>,
    config: &EmConfig,
) -> Result<SweepResult> {
    let mut gs: Vec<usize> = g_range.into_iter().collect();
    gs.sort_unstable();
    gs.dedup();
    if gs.is_empty() {
        return Err(Error::Config("g range is empty".into()));
    }
    if let Some(&g) = gs.iter().find(|&&g| g == 0 || g > data.nrows()) {
        return Err(Error::Config(format!(
            "g = {g} is outside 1..={}",
            data.nrows()
        )));
    }

    let outcomes: Vec<(usize, Result<FitReport>)> = gs
        .par_iter()
        .map(|&g| (g, fit_at(data, g, config, config.restarts)))
        .collect();

    let mut fits: Vec<FitReport> = Vec::new();
    let mut failed = Vec::new();
    for (g, outcome) in outcomes {
        match outcome {
            Ok(mut report) => {
                if let Some(prev) = fits.last() {
                    let prev_ll = prev.loglik();
                    if report.loglik() < prev_ll - 1e-6 * (1.0 + prev_ll.abs()) {
                        warn!(
                            "log-likelihood fell from g = {} to g = {g}; refitting with {} restarts",
                            prev.params.g(),
                            2 * config.restarts
                        );
                        if let Ok(refit) = fit_at(data, g, config, 2 * config.restarts) {
                            if refit.loglik() > report.loglik() {
                                report = refit;
                            }
                        }
                    }
                }
                fits.push(report);
            }
            Err(e) => {
                warn!("fit with g = {g} failed and is excluded: {e}");
                failed.push((g, e.to_string()));
            }
        }
    }
    if fits.is_empty() {
        return Err(Error::SweepFailed(
            failed.iter().map(|(g, e)| format!("g = {g}: {e}")).collect(),
        ));
    }
    Ok(SweepResult { fits, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_values() {
        assert_eq!(penalty_dim(20, 20), 4619);
        assert_eq!(penalty_dim(1, 1), 2);
        assert_eq!(penalty_dim(5, 9), 274);
    }

    #[test]
    fn exact_linear_loglik_recovers_kappa() {
        let (a, s, n, d) = (-3.2, 1.7e-3, 500usize, 4usize);
        let rows: Vec<(usize, f64)> = (1..=10)
            .map(|g| (g, n as f64 * (a + s * penalty_dim(g, d) as f64)))
            .collect();
        let table = slope_criterion(&rows, d, n, None, None).unwrap();
        let Method::Slope { kappa } = table.method else { panic!() };
        assert!((kappa - 2.0 * s).abs() < 1e-12);
        assert_eq!(table.chosen_g, 1);
    }

    #[test]
    fn kappa_override_is_used_verbatim() {
        let rows = vec![(1, -100.0), (2, -80.0), (3, -75.0)];
        let table = slope_criterion(&rows, 2, 10, None, Some(3.55e-4)).unwrap();
        for row in &table.rows {
            assert_eq!(row.criterion, -row.loglik / 10.0 + 3.55e-4 * row.penalty as f64);
        }
    }

    #[test]
    fn decreasing_loglik_is_a_slope_error() {
        let rows = vec![(1, -10.0), (2, -20.0), (3, -30.0)];
        assert!(matches!(
            slope_criterion(&rows, 1, 10, None, None),
            Err(Error::SlopeEstimation(_))
        ));
    }

    #[test]
    fn window_checks() {
        let rows = vec![(1, -10.0), (2, -5.0)];
        assert!(matches!(
            slope_criterion(&rows, 1, 10, None, None),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            slope_criterion(&rows, 1, 10, Some(2), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ties_choose_smallest_g() {
        // With κ = 0 equal logliks tie exactly.
        let rows = vec![(3, -5.0), (1, -7.0), (2, -5.0)];
        let table = slope_criterion(&rows, 1, 1, None, Some(0.0)).unwrap();
        assert_eq!(table.chosen_g, 2);
        let flat = vec![(1, -5.0), (2, -5.0), (3, -5.0)];
        assert_eq!(bic_criterion(&flat, 2, 100).unwrap().chosen_g, 1);
    }

    #[test]
    fn bic_formula() {
        let rows = vec![(2, -123.0)];
        let table = bic_criterion(&rows, 3, 50).unwrap();
        assert_eq!(table.rows[0].criterion, 246.0 + 19.0 * 50f64.ln());
        assert_eq!(table.chosen_g, 2);
    }

    #[test]
    fn seeds_differ_per_g() {
        assert_ne!(seed_for_g(1, 1), seed_for_g(1, 2));
        assert_eq!(seed_for_g(7, 3), seed_for_g(7, 3));
    }
}
