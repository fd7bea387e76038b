//! Basis systems `x(t)` and the design matrices they induce on a sampling grid.
//!
//! Three families are supported:
//!
//! - monomials `(1, t, t², ..., t^{d-1})`, evaluated on the raw `t` (no
//!   rescaling, so high `d` on a wide domain is poorly conditioned);
//! - Fourier `(1, sin ωt, cos ωt, sin 2ωt, cos 2ωt, ...)` with
//!   `ω = 2π / (t_hi - t_lo)` and odd `d`;
//! - cubic B-splines with `d - 4` equally spaced interior knots and clamped
//!   boundary knots, which gives exactly `d` functions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order (degree + 1) of the spline family.
pub const BSPLINE_ORDER: usize = 4;

/// Strictly increasing sampling points `t_1 < ... < t_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SampleGrid {
    points: Vec<f64>,
}

impl SampleGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("sample grid must hold at least one point".into()));
        }
        if let Some(j) = points.iter().position(|t| !t.is_finite()) {
            return Err(Error::data_at(0, Some(j), "grid point is not finite"));
        }
        if let Some(j) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "grid points must be strictly increasing (points {} and {})",
                j,
                j + 1
            )));
        }
        Ok(Self { points })
    }

    /// `m` endpoint-inclusive equally spaced points on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("grid size must be positive".into()));
        }
        if m == 1 {
            return Self::new(vec![lo]);
        }
        if !(hi > lo) {
            return Err(Error::Config(format!("empty interval [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|j| lo + step * j as f64).collect();
        points[m - 1] = hi;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for SampleGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<SampleGrid> for Vec<f64> {
    fn from(grid: SampleGrid) -> Self {
        grid.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Monomial,
    Fourier,
    #[serde(alias = "b-spline")]
    Bspline,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Monomial => "monomial",
            BasisKind::Fourier => "fourier",
            BasisKind::Bspline => "bspline",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "monomial" => Ok(BasisKind::Monomial),
            "fourier" => Ok(BasisKind::Fourier),
            "bspline" | "b-spline" => Ok(BasisKind::Bspline),
            other => Err(Error::Config(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// A `d`-dimensional basis on the interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct BasisSystem {
    kind: BasisKind,
    dim: usize,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
struct BasisSpec {
    kind: BasisKind,
    dim: usize,
    domain: [f64; 2],
}

impl TryFrom<BasisSpec> for BasisSystem {
    type Error = Error;

    fn try_from(spec: BasisSpec) -> Result<Self> {
        BasisSystem::new(spec.kind, spec.dim, spec.domain[0], spec.domain[1])
    }
}

impl From<BasisSystem> for BasisSpec {
    fn from(b: BasisSystem) -> Self {
        BasisSpec {
            kind: b.kind,
            dim: b.dim,
            domain: [b.lo, b.hi],
        }
    }
}

impl BasisSystem {
    pub fn new(kind: BasisKind, dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Config(format!("invalid basis domain [{lo}, {hi}]")));
        }
        match kind {
            _ if dim == 0 => return Err(Error::Config("basis dimension must be positive".into())),
            BasisKind::Fourier if dim.is_multiple_of(2) => {
                return Err(Error::Config(format!(
                    "fourier basis needs an odd dimension (intercept plus sin/cos pairs), got {dim}"
                )))
            }
            BasisKind::Bspline if dim < BSPLINE_ORDER => {
                return Err(Error::Config(format!(
                    "cubic B-spline basis needs dimension >= {BSPLINE_ORDER}, got {dim}"
                )))
            }
            _ => {}
        }
        Ok(Self { kind, dim, lo, hi })
    }

    pub fn monomial(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(BasisKind::Monomial, dim, lo, hi)
    }

    pub fn fourier(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(BasisKind::Fourier, dim, lo, hi)
    }

    pub fn bspline(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(BasisKind::Bspline, dim, lo, hi)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    /// Full clamped knot vector of the cubic spline family (length `d + 4`).
    pub fn knots(&self) -> Vec<f64> {
        let interior = self.dim.saturating_sub(BSPLINE_ORDER);
        let width = self.hi - self.lo;
        let mut knots = Vec::with_capacity(self.dim + BSPLINE_ORDER);
        knots.extend(std::iter::repeat_n(self.lo, BSPLINE_ORDER));
        for k in 1..=interior {
            knots.push(self.lo + width * k as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(self.hi, BSPLINE_ORDER));
        knots
    }

    /// Evaluates `x(t)`; `t` outside the domain is an error.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        self.evaluate_into(t, out.as_mut_slice())?;
        Ok(out)
    }

    /// Evaluates `x(t)` after clamping `t` into the domain.
    pub fn evaluate_clamped(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.fill(t.clamp(self.lo, self.hi), out.as_mut_slice());
        out
    }

    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !self.contains(t) {
            return Err(Error::Domain {
                t,
                lo: self.lo,
                hi: self.hi,
            });
        }
        assert_eq!(out.len(), self.dim, "output slice must have length d");
        self.fill(t, out);
        Ok(())
    }

    fn fill(&self, t: f64, out: &mut [f64]) {
        match self.kind {
            BasisKind::Monomial => {
                let mut power = 1.0;
                for v in out.iter_mut() {
                    *v = power;
                    power *= t;
                }
            }
            BasisKind::Fourier => {
                let omega = 2.0 * PI / (self.hi - self.lo);
                out[0] = 1.0;
                for k in 1..=(self.dim - 1) / 2 {
                    let (s, c) = (k as f64 * omega * t).sin_cos();
                    out[2 * k - 1] = s;
                    out[2 * k] = c;
                }
            }
            BasisKind::Bspline => self.fill_bspline(t, out),
        }
    }

    fn fill_bspline(&self, t: f64, out: &mut [f64]) {
        const DEGREE: usize = BSPLINE_ORDER - 1;
        let knots = self.knots();
        out.fill(0.0);

        // Knot span s with knots[s] <= t < knots[s + 1]; the right endpoint
        // belongs to the last non-empty span.
        let last = self.dim - 1;
        let span = if t >= knots[last + 1] {
            last
        } else {
            let upper = knots[DEGREE + 1..=last + 1].partition_point(|&k| k <= t);
            DEGREE + upper
        };

        // Triangular de Boor table over the DEGREE + 1 non-zero functions.
        let mut values = [0.0; BSPLINE_ORDER];
        let mut left = [0.0; BSPLINE_ORDER];
        let mut right = [0.0; BSPLINE_ORDER];
        values[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { values[r] / denom } else { 0.0 };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        out[span - DEGREE..=span].copy_from_slice(&values);
    }
}

/// The `m × d` matrix `X` with rows `x(t_j)ᵀ`, together with an SVD-based
/// pseudo-inverse `(XᵀX)⁺Xᵀ`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    gram_rank: usize,
    pinv: DMatrix<f64>,
    gram_inverse: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn build(basis: &BasisSystem, grid: &SampleGrid) -> Result<Self> {
        let (m, d) = (grid.len(), basis.dim());
        let mut values = DMatrix::zeros(m, d);
        let mut row = vec![0.0; d];
        for (j, &t) in grid.points().iter().enumerate() {
            basis.evaluate_into(t, &mut row)?;
            for (k, &v) in row.iter().enumerate() {
                values[(j, k)] = v;
            }
        }
        Ok(Self::from_matrix(values))
    }

    /// Factors an arbitrary design matrix. Singular values below
    /// `max(m, d) · ε · σ_max` are treated as zero.
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        let (m, d) = values.shape();
        let svd = values.clone().svd(true, true);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = m.max(d) as f64 * f64::EPSILON * sigma_max;

        let mut pinv = DMatrix::zeros(d, m);
        let mut gram_inverse = DMatrix::zeros(d, d);
        let mut gram_rank = 0;
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s <= cutoff || s == 0.0 {
                continue;
            }
            gram_rank += 1;
            let v_k = v_t.row(k).transpose();
            let u_k = u.column(k);
            pinv += (&v_k / s) * u_k.transpose();
            gram_inverse += (&v_k / (s * s)) * v_k.transpose();
        }
        Self {
            values,
            gram_rank,
            pinv,
            gram_inverse,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn gram_rank(&self) -> usize {
        self.gram_rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.gram_rank == self.ncols()
    }

    /// `(XᵀX)⁺Xᵀ`, a `d × m` matrix.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// `(XᵀX)⁺`.
    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inverse
    }

    /// Minimum-norm least-squares solution of `min ‖z − Xb‖`.
    pub fn solve(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.pinv * z
    }
}
