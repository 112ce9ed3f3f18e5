use std::cmp::Ordering;

use crate::error::{Error, Result};

/// `1 - Σ (count_c / total)²`.
pub fn gini(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("class counts"));
    }
    let t = total as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

/// Axis-aligned split: samples with `row[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `G(parent) - (n_L/n) G(L) - (n_R/n) G(R)` over the node's samples.
    pub impurity_decrease: f64,
}

/// `Σ_c l_c² / n_L + Σ_c r_c² / n_R` as an exact fraction. Maximizing it
/// minimizes the weighted child impurity; integer arithmetic keeps ties exact
/// so tie-breaking never depends on rounding.
#[derive(Debug, Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(left_sq: u128, n_left: u128, right_sq: u128, n_right: u128) -> Self {
        Self { num: left_sq * n_right + right_sq * n_left, den: n_left * n_right }
    }

    fn cmp(&self, other: &Purity) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// `n · Δ` for a node of `n` samples, as an exact fraction. Dividing by the
/// root's sample count gives the global gain used to order the frontier, so
/// comparing these directly orders leaves by global gain.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Gain {
    num: u128,
    den: u128,
}

impl Gain {
    pub(crate) fn cmp(&self, other: &Gain) -> Ordering {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => (self.num as f64 / self.den as f64).total_cmp(&(other.num as f64 / other.den as f64)),
        }
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    let mid = if mid.is_finite() { mid } else { lo / 2.0 + hi / 2.0 };
    // a threshold equal to `hi` would send `hi` left
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

/// Best Gini split over all rows of a row-major `[n, feature_dim]` matrix.
pub fn best_split(features: &[f64], feature_dim: usize, targets: &[usize], num_classes: usize) -> Option<Split> {
    assert_eq!(features.len(), targets.len() * feature_dim, "feature matrix does not match targets");
    let all: Vec<usize> = (0..targets.len()).collect();
    best_split_among(features, feature_dim, targets, num_classes, &all).map(|(s, _)| s)
}

/// Best split of the samples at `indices`. Candidate thresholds are the
/// midpoints between consecutive distinct values of each feature. Ties go to
/// the lower feature index, then the lower threshold. Returns `None` when no
/// candidate strictly reduces impurity.
pub(crate) fn best_split_among(
    features: &[f64],
    feature_dim: usize,
    targets: &[usize],
    num_classes: usize,
    indices: &[usize],
) -> Option<(Split, Gain)> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let mut parent = vec![0usize; num_classes];
    for &i in indices {
        parent[targets[i]] += 1;
    }
    let parent_sq: u128 = parent.iter().map(|&c| (c as u128).pow(2)).sum();

    let mut best: Option<(Purity, usize, f64, Vec<usize>)> = None;
    let mut order = indices.to_vec();
    let mut left = vec![0usize; num_classes];
    for f in 0..feature_dim {
        let value = |i: usize| features[i * feature_dim + f];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        left.fill(0);
        let mut left_sq: u128 = 0;
        let mut right_sq = parent_sq;
        for pos in 0..n - 1 {
            let c = targets[order[pos]];
            left_sq += 2 * left[c] as u128 + 1;
            right_sq -= 2 * (parent[c] - left[c]) as u128 - 1;
            left[c] += 1;
            let (lo, hi) = (value(order[pos]), value(order[pos + 1]));
            if lo >= hi {
                continue;
            }
            let n_left = (pos + 1) as u128;
            let score = Purity::new(left_sq, n_left, right_sq, n as u128 - n_left);
            if best.as_ref().is_none_or(|(b, ..)| score.cmp(b) == Ordering::Greater) {
                best = Some((score, f, midpoint(lo, hi), left.clone()));
            }
        }
    }

    let (score, feature, threshold, left_counts) = best?;
    // strict improvement: score > Σp² / n
    if score.num * n as u128 <= parent_sq * score.den {
        return None;
    }
    let gain = Gain { num: score.num * n as u128 - parent_sq * score.den, den: score.den * n as u128 };
    let right_counts: Vec<usize> = parent.iter().zip(&left_counts).map(|(p, l)| p - l).collect();
    let n_left: usize = left_counts.iter().sum();
    let weighted = |counts: &[usize], m: usize| m as f64 / n as f64 * gini(counts).unwrap_or(0.0);
    let impurity_decrease = gini(&parent).unwrap_or(0.0) - weighted(&left_counts, n_left) - weighted(&right_counts, n - n_left);
    Some((Split { feature, threshold, impurity_decrease }, gain))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[4, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[2, 2]).unwrap(), 0.5);
        assert_eq!(gini(&[3, 1]).unwrap(), 0.375);
        assert!(gini(&[0, 0]).is_err());
    }

    #[test]
    fn separable_line() {
        let s = best_split(&[0.0, 1.0, 2.0, 3.0], 1, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 1.5));
        assert_eq!(s.impurity_decrease, 0.5);
    }

    #[test]
    fn pure_node_has_no_split() {
        assert_eq!(best_split(&[0.0, 1.0, 2.0], 1, &[1, 1, 1], 2), None);
    }

    #[test]
    fn identical_rows_have_no_split() {
        assert_eq!(best_split(&[5.0, 5.0, 5.0, 5.0], 2, &[0, 1], 2), None);
    }

    #[test]
    fn xor_has_no_improving_split() {
        let x = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        assert_eq!(best_split(&x, 2, &[0, 1, 1, 0], 2), None);
    }

    #[test]
    fn tie_prefers_lower_feature() {
        // both features separate the classes perfectly
        let x = [0.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0, 13.0];
        let s = best_split(&x, 2, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 1.5));
    }

    #[test]
    fn midpoint_stays_below_upper_value() {
        let lo = 1.0_f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(m >= lo && m < hi);
        assert_eq!(midpoint(f64::MAX, f64::MAX), f64::MAX);
        let big = midpoint(-f64::MAX, f64::MAX);
        assert!(big.is_finite());
    }
}
