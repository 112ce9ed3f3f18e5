//! Central finite differences for checking analytic gradients.
//!
//! Besides the scalar helpers, this module carries randomized checks for every
//! kernel and for the whole network. Each check draws its own shapes and
//! values from a seed and reports the worst disagreement it saw.

use crate::error::Result;
use crate::kernels::{
    conv2d_backward, conv2d_forward, cross_entropy_loss, linear_backward, linear_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, softmax,
};
use crate::model::CnnModel;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Perturbation used by every finite-difference check.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which gradients are compared on an absolute scale.
///
/// A central difference of an O(1) objective carries about `1e-16 / FD_STEP`
/// of rounding noise, so components smaller than this cannot be resolved
/// to relative precision.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Numeric gradient of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error between two gradient vectors.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Outcome of one randomized gradient check.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CheckSummary {
    pub compared: usize,
    /// Probes dropped because the perturbation crossed a ReLU kink or
    /// changed a pooling winner.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

impl CheckSummary {
    fn observe(&mut self, analytic: &[f64], numeric: &[f64]) {
        for (&a, &n) in analytic.iter().zip(numeric) {
            self.compared += 1;
            self.max_abs_error = self.max_abs_error.max((a - n).abs());
            self.max_rel_error = self.max_rel_error.max(relative_error(a, n, REL_ERR_FLOOR));
        }
    }

    pub fn merge(self, other: CheckSummary) -> CheckSummary {
        CheckSummary {
            compared: self.compared + other.compared,
            skipped: self.skipped + other.skipped,
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
        }
    }
}

fn size(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

fn random_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("shape matches length")
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with_data(like: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_vec(like.shape(), data.to_vec()).expect("shape matches length")
}

/// Convolution on random `[1..3, 3..6, 3..6]` inputs with 1 to 3 filters,
/// through the scalar objective `Σ r ⊙ conv(x)` for a random `r`.
pub fn check_conv(seed: u64) -> Result<CheckSummary> {
    let mut rng = SplitMix64::new(seed);
    let (c_in, c_out) = (size(&mut rng, 1, 3), size(&mut rng, 1, 3));
    let (h, w) = (size(&mut rng, 3, 6), size(&mut rng, 3, 6));
    let x = random_tensor(&mut rng, &[c_in, h, w]);
    let k = random_tensor(&mut rng, &[c_out, c_in, 3, 3]);
    let b = random_tensor(&mut rng, &[c_out]);
    let r = random_tensor(&mut rng, &[c_out, h - 2, w - 2]);
    let grads = conv2d_backward(&r, &x, &k)?;
    let objective = |x: &Tensor, k: &Tensor, b: &Tensor| dot(&r, &conv2d_forward(x, k, b).expect("valid shapes"));

    let mut summary = CheckSummary::default();
    let n = numeric_gradient(x.data(), FD_STEP, |v| objective(&with_data(&x, v), &k, &b));
    summary.observe(grads.input.data(), &n);
    let n = numeric_gradient(k.data(), FD_STEP, |v| objective(&x, &with_data(&k, v), &b));
    summary.observe(grads.weight.data(), &n);
    let n = numeric_gradient(b.data(), FD_STEP, |v| objective(&x, &k, &with_data(&b, v)));
    summary.observe(grads.bias.data(), &n);
    Ok(summary)
}

/// ReLU on 1 to 20 values kept at least 1e-3 away from the kink.
pub fn check_relu(seed: u64) -> Result<CheckSummary> {
    let mut rng = SplitMix64::new(seed);
    let len = size(&mut rng, 1, 20);
    let values = (0..len)
        .map(|_| loop {
            let v = rng.uniform(-1.0, 1.0);
            if v.abs() > 1e-3 {
                break v;
            }
        })
        .collect();
    let x = Tensor::vector(values);
    let r = random_tensor(&mut rng, &[len]);
    let analytic = relu_backward(&r, &x)?;
    let n = numeric_gradient(x.data(), FD_STEP, |v| dot(&r, &relu_forward(&with_data(&x, v))));
    let mut summary = CheckSummary::default();
    summary.observe(analytic.data(), &n);
    Ok(summary)
}

/// Max-pooling on `[1..2, 2..7, 2..7]` inputs whose values are a shuffled
/// ladder with step 0.01, so no window holds a tie within the probe step.
pub fn check_pool(seed: u64) -> Result<CheckSummary> {
    let mut rng = SplitMix64::new(seed);
    let (c, h, w) = (size(&mut rng, 1, 2), size(&mut rng, 2, 7), size(&mut rng, 2, 7));
    let values = rng.permutation(c * h * w).into_iter().map(|i| i as f64 * 0.01 - 0.5).collect();
    let x = Tensor::from_vec(&[c, h, w], values)?;
    let (pooled, argmax) = maxpool2x2_forward(&x)?;
    let r = random_tensor(&mut rng, pooled.shape());
    let analytic = maxpool2x2_backward(&r, &argmax, x.shape())?;
    let n = numeric_gradient(x.data(), FD_STEP, |v| {
        dot(&r, &maxpool2x2_forward(&with_data(&x, v)).expect("valid shape").0)
    });
    let mut summary = CheckSummary::default();
    summary.observe(analytic.data(), &n);
    Ok(summary)
}

/// Fully connected layer with `D_in` in 1..10 and `D_out` in 1..5.
pub fn check_linear(seed: u64) -> Result<CheckSummary> {
    let mut rng = SplitMix64::new(seed);
    let (d_in, d_out) = (size(&mut rng, 1, 10), size(&mut rng, 1, 5));
    let x = random_tensor(&mut rng, &[d_in]);
    let wt = random_tensor(&mut rng, &[d_out, d_in]);
    let b = random_tensor(&mut rng, &[d_out]);
    let r = random_tensor(&mut rng, &[d_out]);
    let grads = linear_backward(&r, &x, &wt)?;
    let objective = |x: &Tensor, wt: &Tensor, b: &Tensor| dot(&r, &linear_forward(x, wt, b).expect("valid shapes"));

    let mut summary = CheckSummary::default();
    let n = numeric_gradient(x.data(), FD_STEP, |v| objective(&with_data(&x, v), &wt, &b));
    summary.observe(grads.input.data(), &n);
    let n = numeric_gradient(wt.data(), FD_STEP, |v| objective(&x, &with_data(&wt, v), &b));
    summary.observe(grads.weight.data(), &n);
    let n = numeric_gradient(b.data(), FD_STEP, |v| objective(&x, &wt, &with_data(&b, v)));
    summary.observe(grads.bias.data(), &n);
    Ok(summary)
}

/// Softmax followed by cross-entropy, 2 to 8 logits in `[-5, 5)`.
pub fn check_softmax_ce(seed: u64) -> Result<CheckSummary> {
    let mut rng = SplitMix64::new(seed);
    let n = size(&mut rng, 2, 8);
    let logits: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
    let class = rng.below(n as u64) as usize;
    let loss = |z: &[f64]| {
        let p = softmax(z).expect("finite logits");
        cross_entropy_loss(&p, class).expect("class in range").0.value()
    };
    let (_, analytic) = cross_entropy_loss(&softmax(&logits)?, class)?;
    let numeric = numeric_gradient(&logits, FD_STEP, loss);
    let mut summary = CheckSummary::default();
    summary.observe(&analytic, &numeric);
    Ok(summary)
}

/// One input pixel or one parameter entry.
fn slot<'a>(model: &'a mut CnnModel, image: &'a mut Tensor, on_input: bool, tensor: usize, index: usize) -> &'a mut f64 {
    if on_input {
        &mut image.data_mut()[index]
    } else {
        &mut model.params_mut().tensors_mut().swap_remove(tensor).data_mut()[index]
    }
}

/// Loss gradient of the whole network at `probes` random coordinates, half
/// of them parameters (tensor chosen uniformly, then an entry) and half input
/// pixels. A probe is skipped when either perturbed pass has a different
/// [`ActivationPattern`](crate::model::ActivationPattern).
pub fn check_network(model: &CnnModel, image: &Tensor, label: usize, probes: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = SplitMix64::new(seed);
    let base = model.forward(image)?;
    let pattern = base.activation_pattern();
    let grads = model.backward(&base, label)?;
    let mut probe_model = model.clone();
    let mut probe_image = image.clone();
    let mut summary = CheckSummary::default();

    for p in 0..probes {
        let on_input = p % 2 == 1;
        let (tensor, index) = if on_input {
            (usize::MAX, rng.below(image.len() as u64) as usize)
        } else {
            let t = rng.below(grads.params.tensors().len() as u64) as usize;
            (t, rng.below(grads.params.tensors()[t].len() as u64) as usize)
        };
        let mut eval = |delta: f64| -> Result<Option<f64>> {
            let entry = slot(&mut probe_model, &mut probe_image, on_input, tensor, index);
            let orig = *entry;
            *entry = orig + delta;
            let pass = probe_model.forward(&probe_image);
            *slot(&mut probe_model, &mut probe_image, on_input, tensor, index) = orig;
            let pass = pass?;
            if pass.activation_pattern() != pattern {
                return Ok(None);
            }
            Ok(Some(cross_entropy_loss(&pass.probs, label)?.0.value()))
        };
        let (Some(plus), Some(minus)) = (eval(FD_STEP)?, eval(-FD_STEP)?) else {
            summary.skipped += 1;
            continue;
        };
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = if on_input {
            grads.input.data()[index]
        } else {
            grads.params.tensors()[tensor].data()[index]
        };
        summary.observe(&[analytic], &[numeric]);
    }
    Ok(summary)
}
