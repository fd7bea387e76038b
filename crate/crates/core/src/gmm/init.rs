use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::em::{m_step_rows, Rows};
use super::{GmmParams, ResponsibilityMatrix};
use crate::error::{Error, Result};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations after seeding stop here even if labels still change.
const MAX_LLOYD_ITER: usize = 100;

/// k-means++ seeding (D² sampling). Returns the indices of the seed rows.
fn seed_centres<R: Rng + ?Sized>(rows: &Rows, g: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.n;
    let mut centres = Vec::with_capacity(g);
    centres.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(rows.row(i), rows.row(centres[0])))
        .collect();
    while centres.len() < g {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centres.push(next);
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(squared_distance(rows.row(i), rows.row(next)));
        }
    }
    centres
}

fn nearest_centre(x: &[f64], centres: &[Vec<f64>]) -> usize {
    let mut label = 0;
    let mut best = f64::INFINITY;
    for (c, centre) in centres.iter().enumerate() {
        let dist = squared_distance(x, centre);
        if dist < best {
            best = dist;
            label = c;
        }
    }
    label
}

/// k-means with k-means++ seeding. Returns 0-based labels; a centre that
/// loses all its rows stays where it was.
fn kmeans_labels<R: Rng + ?Sized>(rows: &Rows, g: usize, rng: &mut R) -> Vec<usize> {
    let mut centres: Vec<Vec<f64>> = seed_centres(rows, g, rng)
        .into_iter()
        .map(|i| rows.row(i).to_vec())
        .collect();
    let mut labels: Vec<usize> = (0..rows.n).map(|i| nearest_centre(rows.row(i), &centres)).collect();
    for _ in 0..MAX_LLOYD_ITER {
        let mut sums = vec![vec![0.0; rows.d]; g];
        let mut counts = vec![0usize; g];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(rows.row(i)) {
                *s += x;
            }
        }
        for c in 0..g {
            if counts[c] > 0 {
                for (dst, s) in centres[c].iter_mut().zip(&sums[c]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        let next: Vec<usize> = (0..rows.n).map(|i| nearest_centre(rows.row(i), &centres)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Initial parameters from k-means (k-means++ seeding, Lloyd iterations)
/// and one hard-assignment M-step.
///
/// A cluster too small to carry a covariance (a single distinct point)
/// borrows the pooled sample covariance of all rows.
pub(crate) fn kmeans_plus_plus_init_rows<R: Rng + ?Sized>(
    rows: &Rows,
    g: usize,
    rng: &mut R,
    ridge: f64,
) -> Result<GmmParams> {
    let labels = kmeans_labels(rows, g, rng);
    let resp = ResponsibilityMatrix::one_hot(&labels, g);
    match m_step_rows(rows, &resp, ridge) {
        Err(Error::SingularCovariance { .. }) => {}
        other => return other,
    }

    let pooled = m_step_rows(rows, &ResponsibilityMatrix::one_hot(&vec![0; rows.n], 1), ridge)?;
    let pooled_cov = pooled.covariances()[0].clone();
    let mut weights = Vec::with_capacity(g);
    let mut means = Vec::with_capacity(g);
    let mut covariances = Vec::with_capacity(g);
    for c in 0..g {
        let members: Vec<usize> = (0..rows.n).filter(|&i| labels[i] == c).collect();
        let sub = Rows {
            n: members.len(),
            d: rows.d,
            data: members.iter().flat_map(|&i| rows.row(i).iter().copied()).collect(),
        };
        let single = ResponsibilityMatrix::one_hot(&vec![0; sub.n], 1);
        let (mean, cov) = match m_step_rows(&sub, &single, ridge) {
            Ok(p) => (p.means()[0].clone(), p.covariances()[0].clone()),
            Err(Error::SingularCovariance { .. }) => {
                let mean = DVector::from_fn(rows.d, |k, _| {
                    members.iter().map(|&i| rows.row(i)[k]).sum::<f64>() / sub.n as f64
                });
                (mean, pooled_cov.clone())
            }
            Err(e) => return Err(e),
        };
        weights.push(members.len() as f64 / rows.n as f64);
        means.push(mean);
        covariances.push(cov);
    }
    Ok(GmmParams::from_parts_unchecked(weights, means, covariances))
}

/// k-means++ initialization of a `g`-component mixture on the rows of `data`.
pub fn kmeans_plus_plus_init<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    g: usize,
    rng: &mut R,
    ridge: f64,
) -> Result<GmmParams> {
    let rows = Rows::new(data)?;
    if g == 0 || g > rows.n {
        return Err(Error::Config(format!("cannot seed {g} components from {} rows", rows.n)));
    }
    kmeans_plus_plus_init_rows(&rows, g, rng, ridge)
}
