use std::fmt::Write;

use crate::error::{Error, Result};
use crate::features::FeatureTable;

/// Symmetric `N × N` Pearson matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    values: Vec<f64>,
    degenerate: Vec<usize>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Constant columns; their off-diagonal entries are reported as 0.
    pub fn degenerate_columns(&self) -> &[usize] {
        &self.degenerate
    }

    /// Header row `,f0,..` then one labeled row per feature.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            write!(out, ",f{j}").unwrap();
        }
        out.push('\n');
        for i in 0..self.dim {
            write!(out, "f{i}").unwrap();
            for j in 0..self.dim {
                write!(out, ",{:.16e}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson coefficients between every pair of feature columns.
///
/// Means and co-moments are accumulated in a single pass with the running
/// update `C += (x_i - mean_i_old)(x_j - mean_j_new)`, which avoids the
/// cancellation of the naive sum-of-products formula.
pub fn pearson_correlation(table: &FeatureTable) -> Result<CorrelationMatrix> {
    if table.len() < 2 {
        return Err(Error::Empty("correlation needs at least 2 samples"));
    }
    let d = table.feature_dim();
    let mut mean = vec![0.0; d];
    let mut delta = vec![0.0; d];
    let mut comoment = vec![0.0; d * d];
    for (k, row) in table.rows().enumerate() {
        let n = (k + 1) as f64;
        for i in 0..d {
            delta[i] = row[i] - mean[i];
            mean[i] += delta[i] / n;
        }
        for i in 0..d {
            for j in i..d {
                comoment[i * d + j] += delta[i] * (row[j] - mean[j]);
            }
        }
    }

    let degenerate: Vec<usize> = (0..d).filter(|&i| comoment[i * d + i] <= 0.0).collect();
    if !degenerate.is_empty() {
        log::warn!("constant feature columns {degenerate:?}: correlations reported as 0");
    }
    let mut values = vec![0.0; d * d];
    for i in 0..d {
        values[i * d + i] = 1.0;
        for j in i + 1..d {
            let r = if degenerate.contains(&i) || degenerate.contains(&j) {
                0.0
            } else {
                (comoment[i * d + j] / (comoment[i * d + i] * comoment[j * d + j]).sqrt()).clamp(-1.0, 1.0)
            };
            values[i * d + j] = r;
            values[j * d + i] = r;
        }
    }
    Ok(CorrelationMatrix { dim: d, values, degenerate })
}
