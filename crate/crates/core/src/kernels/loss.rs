use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to the true-class probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-15;

/// Cross-entropy in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ScalarLoss(f64);

impl ScalarLoss {
    pub fn new(value: f64) -> Self {
        debug_assert!(value >= 0.0);
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.len() < 2 {
        return Err(Error::shape("softmax", format!("need at least 2 logits, got {}", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Returns `-ln p[true_class]` and the gradient of softmax+CE with respect
/// to the logits, `p - onehot(true_class)`.
pub fn cross_entropy_loss(probs: &[f64], true_class: usize) -> Result<(ScalarLoss, Vec<f64>)> {
    if true_class >= probs.len() {
        return Err(Error::ClassOutOfRange { index: true_class, num_classes: probs.len() });
    }
    let loss = -probs[true_class].max(PROB_FLOOR).ln();
    let mut grad = probs.to_vec();
    grad[true_class] -= 1.0;
    // -ln(1) is -0.0
    Ok((ScalarLoss::new(loss.max(0.0)), grad))
}
