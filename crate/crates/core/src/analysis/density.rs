use std::f64::consts::PI;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::features::FeatureTable;

pub const GRID_POINTS: usize = 256;
const MIN_BANDWIDTH: f64 = 1e-6;

/// Gaussian KDE sampled on an even grid spanning `[min - 3h, max + 3h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| (x[1] - x[0]) * (d[0] + d[1]) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,density\n");
        for (x, d) in self.x.iter().zip(&self.density) {
            writeln!(out, "{x:.16e},{d:.16e}").unwrap();
        }
        out
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 · min(σ, IQR / 1.34) · n^(-1/5)`. A zero IQR
/// falls back to σ alone; the result never drops below 1e-6.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Density of one feature over the samples labeled `class`.
pub fn class_density(table: &FeatureTable, feature_index: usize, class: usize) -> Result<DensityCurve> {
    if feature_index >= table.feature_dim() {
        return Err(Error::LengthMismatch { left: feature_index, right: table.feature_dim() });
    }
    let values: Vec<f64> = table
        .rows()
        .zip(table.labels())
        .filter(|(_, &l)| l == class)
        .map(|(r, _)| r[feature_index])
        .collect();
    if values.len() < 2 {
        return Err(Error::ClassAbsent(class));
    }
    Ok(kde(&values))
}

pub(crate) fn kde(values: &[f64]) -> DensityCurve {
    let h = silverman_bandwidth(values);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (min - 3.0 * h, max + 3.0 * h);
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    let x: Vec<f64> = (0..GRID_POINTS).map(|k| lo + k as f64 * step).collect();
    let density = x
        .iter()
        .map(|&g| norm * values.iter().map(|&v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    DensityCurve { x, density, bandwidth: h }
}
