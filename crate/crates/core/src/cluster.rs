//! Hard allocation by maximum posterior and partition agreement scoring.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gmm::ResponsibilityMatrix;

/// Cluster labels `1..=g`, one per function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    g: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, g: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::data("a partition needs at least one label"));
        }
        if let Some(i) = labels.iter().position(|&l| l == 0 || l > g) {
            return Err(Error::data_at(
                i,
                None,
                format!("label {} outside 1..={g}", labels[i]),
            ));
        }
        Ok(Self { labels, g })
    }

    /// Builds a partition whose label space is the largest label present.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let g = labels.iter().copied().max().unwrap_or(0);
        Self::new(labels, g)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of members per label, indexed `0..g` for labels `1..=g`.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.g];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }
}

/// `ĉ_i = argmax_c τ_ic`; ties go to the smallest component index.
pub fn allocate(resp: &ResponsibilityMatrix) -> Partition {
    let labels = resp
        .rows()
        .map(|row| {
            let mut best = 0;
            for (c, &t) in row.iter().enumerate() {
                if t > row[best] {
                    best = c;
                }
            }
            best + 1
        })
        .collect();
    Partition {
        labels,
        g: resp.g(),
    }
}

fn pairs(count: u64) -> i128 {
    let c = count as i128;
    c * (c - 1) / 2
}

/// Adjusted Rand index of Hubert and Arabie.
///
/// Pair counts are accumulated as exact integers; the only floating-point
/// operation is the final division. When the index is undefined (both
/// partitions trivial in the same way) the result is 1 for identical
/// partitions.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::data(format!(
            "partitions have different lengths ({n} and {})",
            b.len()
        )));
    }
    if n < 2 {
        return Err(Error::data("adjusted Rand index needs at least two items"));
    }

    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut row_sums = vec![0u64; a.g()];
    let mut col_sums = vec![0u64; b.g()];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *table.entry((x, y)).or_default() += 1;
        row_sums[x - 1] += 1;
        col_sums[y - 1] += 1;
    }
    let index: i128 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: i128 = row_sums.iter().map(|&c| pairs(c)).sum();
    let sum_b: i128 = col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);

    // ARI = (index − E) / (max − E) with E = sum_a·sum_b/total and
    // max = (sum_a + sum_b)/2, scaled through by 2·total.
    let numerator = 2 * (index * total - sum_a * sum_b);
    let denominator = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
    if denominator == 0 {
        return Ok(if numerator == 0 { 1.0 } else { 0.0 });
    }
    Ok(numerator as f64 / denominator as f64)
}
