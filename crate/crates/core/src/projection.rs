//! Least-squares projection of observed series onto a basis.
//!
//! Each observed series `z_i` is replaced by its OLS coefficients
//! `b̃_i = (X_iᵀX_i)⁺X_iᵀz_i`. Rectangular datasets share one design matrix,
//! factored once; irregular datasets build one per series.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{BasisSystem, DesignMatrix, SampleGrid};
use crate::error::{Error, Result};

/// One series of an irregularly sampled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub grid: SampleGrid,
    pub values: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// All series observed on one grid; `values` is `n × m`.
    Rectangular { grid: SampleGrid, values: DMatrix<f64> },
    Irregular(Vec<Series>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    ids: Vec<String>,
    layout: Layout,
}

fn default_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

impl FunctionalDataset {
    pub fn rectangular(grid: SampleGrid, values: DMatrix<f64>) -> Result<Self> {
        let ids = default_ids(values.nrows());
        Self::rectangular_with_ids(ids, grid, values)
    }

    pub fn rectangular_with_ids(
        ids: Vec<String>,
        grid: SampleGrid,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::data(format!(
                "grid has {} points but rows have {} values",
                grid.len(),
                values.ncols()
            )));
        }
        if ids.len() != values.nrows() {
            return Err(Error::data("one id per row is required"));
        }
        if values.nrows() == 0 {
            return Err(Error::data("dataset holds no series"));
        }
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::data_at(i, Some(j), "value is not finite"));
                }
            }
        }
        Ok(Self {
            ids,
            layout: Layout::Rectangular { grid, values },
        })
    }

    pub fn irregular(series: Vec<Series>) -> Result<Self> {
        let ids = default_ids(series.len());
        Self::irregular_with_ids(ids, series)
    }

    pub fn irregular_with_ids(ids: Vec<String>, series: Vec<Series>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::data("dataset holds no series"));
        }
        if ids.len() != series.len() {
            return Err(Error::data("one id per series is required"));
        }
        for (i, s) in series.iter().enumerate() {
            if s.values.len() != s.grid.len() {
                return Err(Error::data_at(i, None, "series length differs from its grid"));
            }
            if let Some(j) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::data_at(i, Some(j), "value is not finite"));
            }
        }
        Ok(Self {
            ids,
            layout: Layout::Irregular(series),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Smallest interval containing every sampling point.
    pub fn time_range(&self) -> (f64, f64) {
        match &self.layout {
            Layout::Rectangular { grid, .. } => (grid.first(), grid.last()),
            Layout::Irregular(series) => series.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), s| (lo.min(s.grid.first()), hi.max(s.grid.last())),
            ),
        }
    }
}

/// OLS coefficients, one row per series.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    coeffs: DMatrix<f64>,
    basis: BasisSystem,
    gram_inverse: Option<DMatrix<f64>>,
}

impl CoefficientMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    /// `(XᵀX)⁺` of the shared design; `None` for irregular datasets.
    pub fn gram_inverse(&self) -> Option<&DMatrix<f64>> {
        self.gram_inverse.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coeffs.ncols()
    }
}

pub fn project(dataset: &FunctionalDataset, basis: &BasisSystem) -> Result<CoefficientMatrix> {
    match dataset.layout() {
        Layout::Rectangular { grid, values } => {
            let design = DesignMatrix::build(basis, grid)?;
            let coeffs = values * design.pinv().transpose();
            Ok(CoefficientMatrix {
                coeffs,
                basis: basis.clone(),
                gram_inverse: Some(design.gram_inverse().clone()),
            })
        }
        Layout::Irregular(series) => {
            let rows = series
                .par_iter()
                .map(|s| Ok(DesignMatrix::build(basis, &s.grid)?.solve(&s.values)))
                .collect::<Result<Vec<_>>>()?;
            let d = basis.dim();
            let coeffs = DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]);
            Ok(CoefficientMatrix {
                coeffs,
                basis: basis.clone(),
                gram_inverse: None,
            })
        }
    }
}

/// Pooled residual variance `Σ_i ‖z_i − X b̃_i‖² / (n(m − d))`.
pub fn noise_variance_estimate(
    dataset: &FunctionalDataset,
    basis: &BasisSystem,
    coeffs: &CoefficientMatrix,
) -> Result<f64> {
    let Layout::Rectangular { grid, values } = dataset.layout() else {
        return Err(Error::InsufficientData(
            "noise variance estimate needs a rectangular dataset".into(),
        ));
    };
    let (n, m, d) = (values.nrows(), values.ncols(), basis.dim());
    if m <= d {
        return Err(Error::InsufficientData(format!(
            "need more grid points than basis functions (m = {m}, d = {d})"
        )));
    }
    let design = DesignMatrix::build(basis, grid)?;
    if !design.is_full_rank() {
        return Err(Error::InsufficientData("design matrix is rank deficient".into()));
    }
    let fitted = coeffs.values() * design.values().transpose();
    let rss = (values - fitted).norm_squared();
    Ok(rss / (n * (m - d)) as f64)
}
