//! The five-convolution network and its SGD-momentum training loop.
//!
//! Spatial plan for a 28×28 input (all convolutions 3×3, no padding, stride 1):
//!
//! ```text
//! 28 -conv1-> 26 -conv2-> 24 -conv3-> 22 -conv4-> 20 -pool-> 10 -conv5-> 8 -pool-> 4
//! ```
//!
//! Every convolution is followed by a ReLU. The final `64 × 4 × 4` map is
//! flattened to 1024 values and projected by one fully connected layer onto
//! `num_classes` logits.

use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, ImageDataset, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::{
    conv2d_backward, conv2d_forward, cross_entropy_loss, linear_backward, linear_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, softmax, ScalarLoss, KERNEL_SIZE,
};
use crate::rng::{SplitMix64, Stream};
use crate::tensor::{argmax, Tensor};

pub const NUM_CONV_LAYERS: usize = 5;
/// Channels of the last convolution.
pub const FINAL_CHANNELS: usize = 64;
/// Side of the last feature map.
pub const FINAL_SIDE: usize = 4;
/// Length of the flattened final feature map.
pub const FLAT_LEN: usize = FINAL_CHANNELS * FINAL_SIDE * FINAL_SIDE;
/// Spatial side after each of conv1..conv4, pool, conv5, pool.
pub const SPATIAL_PLAN: [usize; 7] = [26, 24, 22, 20, 10, 8, 4];

/// Convolutions followed by a 2×2 max-pool (0-based).
const POOL_AFTER: [usize; 2] = [3, 4];

/// Samples per sequential accumulation block in a batch gradient.
const GRAD_BLOCK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_channels: usize,
    pub num_classes: usize,
    #[serde(default = "default_schedule")]
    pub channel_schedule: [usize; NUM_CONV_LAYERS],
    pub seed: u64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

pub fn default_schedule() -> [usize; NUM_CONV_LAYERS] {
    [16, 32, 32, 64, 64]
}
pub fn default_learning_rate() -> f64 {
    0.001
}
pub fn default_momentum() -> f64 {
    0.9
}
pub fn default_batch_size() -> usize {
    128
}
pub fn default_epochs() -> usize {
    20
}

impl CnnConfig {
    /// Default hyperparameters for the given data shape.
    pub fn new(input_channels: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            input_channels,
            num_classes,
            channel_schedule: default_schedule(),
            seed,
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !matches!(self.input_channels, 1 | 3) {
            return fail(format!("input_channels must be 1 or 3, got {}", self.input_channels));
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.channel_schedule.contains(&0) {
            return fail("channel_schedule entries must be positive".into());
        }
        if self.channel_schedule[NUM_CONV_LAYERS - 1] != FINAL_CHANNELS {
            return fail(format!(
                "last channel_schedule entry must be {FINAL_CHANNELS}, got {}",
                self.channel_schedule[NUM_CONV_LAYERS - 1]
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All trainable tensors. Also used for gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv: Vec<ConvLayer>,
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
}

impl Params {
    fn zeros(config: &CnnConfig) -> Self {
        let mut in_ch = config.input_channels;
        let conv = config
            .channel_schedule
            .iter()
            .map(|&out_ch| {
                let layer = ConvLayer {
                    weight: Tensor::zeros(&[out_ch, in_ch, KERNEL_SIZE, KERNEL_SIZE]),
                    bias: Tensor::zeros(&[out_ch]),
                };
                in_ch = out_ch;
                layer
            })
            .collect();
        Self {
            conv,
            fc_weight: Tensor::zeros(&[config.num_classes, FLAT_LEN]),
            fc_bias: Tensor::zeros(&[config.num_classes]),
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Tensors in checkpoint order: conv1 weight, conv1 bias, ..., conv5
    /// bias, fc weight, fc bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.conv.iter().flat_map(|l| [&l.weight, &l.bias]).collect();
        out.push(&self.fc_weight);
        out.push(&self.fc_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.conv.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect();
        out.push(&mut self.fc_weight);
        out.push(&mut self.fc_bias);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(1.0, b);
        }
    }

    fn scale(&mut self, alpha: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(alpha));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    config: CnnConfig,
    params: Params,
    velocity: Params,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
    pool_argmax: Vec<Vec<usize>>,
    pool_inputs: Vec<Vec<usize>>,
    final_shape: Vec<usize>,
    flat: Tensor,
}

/// ReLU on/off pattern and pooling winners of one forward pass. Finite
/// differences are only meaningful while this stays fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    relu: Vec<bool>,
    pool: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Flattened final feature map.
    pub u: Vec<f64>,
    /// Output of the fully connected layer: the extracted feature vector.
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub cache: ForwardCache,
}

impl ForwardPass {
    /// Argmax of the logits, which is the argmax of the softmax but immune to
    /// probabilities that round to equal values.
    pub fn prediction(&self) -> usize {
        argmax(&self.logits)
    }

    /// Spatial side of every intermediate map, in network order.
    pub fn stage_sides(&self) -> Vec<usize> {
        let c = &self.cache;
        let mut sides: Vec<usize> = c.conv_inputs[1..4].iter().map(|t| t.shape()[1]).collect();
        sides.push(c.pool_inputs[0][1]);
        sides.push(c.conv_inputs[4].shape()[1]);
        sides.push(c.pool_inputs[1][1]);
        sides.push(c.final_shape[1]);
        sides
    }

    pub fn activation_pattern(&self) -> ActivationPattern {
        let c = &self.cache;
        ActivationPattern {
            relu: c.pre_activations.iter().flat_map(|t| t.data().iter().map(|&v| v > 0.0)).collect(),
            pool: c.pool_argmax.iter().flatten().copied().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleGradient {
    pub loss: ScalarLoss,
    pub params: Params,
    pub input: Tensor,
    pub correct: bool,
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub mean_loss: ScalarLoss,
    /// Gradient averaged over the batch.
    pub params: Params,
    pub correct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of samples classified correctly by the forward passes of
    /// that epoch (before each batch's update).
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

impl CnnModel {
    /// He-uniform weights on `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`, zero
    /// biases and zero momentum, all drawn from the config seed.
    pub fn init(config: CnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::derived(config.seed, Stream::Init, 0);
        let mut params = Params::zeros(&config);
        for layer in &mut params.conv {
            fill_uniform(&mut layer.weight, &mut rng);
        }
        fill_uniform(&mut params.fc_weight, &mut rng);
        let velocity = params.zeros_like();
        Ok(Self { config, params, velocity })
    }

    pub(crate) fn from_parts(config: CnnConfig, params: Params, velocity: Params) -> Result<Self> {
        config.validate()?;
        let expected = Params::zeros(&config);
        for (which, p) in [("parameter", &params), ("momentum", &velocity)] {
            for (i, (a, b)) in p.tensors().iter().zip(expected.tensors()).enumerate() {
                if a.shape() != b.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{which} tensor {i} has shape {:?}, expected {:?}",
                        a.shape(),
                        b.shape()
                    )));
                }
            }
        }
        Ok(Self { config, params, velocity })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn velocity(&self) -> &Params {
        &self.velocity
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn forward(&self, image: &Tensor) -> Result<ForwardPass> {
        let expected = [self.config.input_channels, IMAGE_SIDE, IMAGE_SIDE];
        if image.shape() != expected {
            return Err(Error::shape(
                "forward",
                format!("image shape {:?}, expected {expected:?}", image.shape()),
            ));
        }
        let mut conv_inputs = Vec::with_capacity(NUM_CONV_LAYERS);
        let mut pre_activations = Vec::with_capacity(NUM_CONV_LAYERS);
        let mut pool_argmax = Vec::with_capacity(POOL_AFTER.len());
        let mut pool_inputs = Vec::with_capacity(POOL_AFTER.len());

        let mut x = image.clone();
        for (l, layer) in self.params.conv.iter().enumerate() {
            let z = conv2d_forward(&x, &layer.weight, &layer.bias)?;
            let mut a = relu_forward(&z);
            conv_inputs.push(x);
            pre_activations.push(z);
            if POOL_AFTER.contains(&l) {
                let (pooled, idx) = maxpool2x2_forward(&a)?;
                pool_inputs.push(a.shape().to_vec());
                pool_argmax.push(idx);
                a = pooled;
            }
            x = a;
        }
        let final_shape = x.shape().to_vec();
        let flat = x.reshape(&[FLAT_LEN]).map_err(|_| {
            Error::shape("forward", "final feature map does not flatten to 1024 values".to_string())
        })?;
        let logits = linear_forward(&flat, &self.params.fc_weight, &self.params.fc_bias)?.into_data();
        let probs = softmax(&logits)?;
        Ok(ForwardPass {
            u: flat.data().to_vec(),
            logits,
            probs,
            cache: ForwardCache { conv_inputs, pre_activations, pool_argmax, pool_inputs, final_shape, flat },
        })
    }

    /// Cross-entropy of one sample.
    pub fn loss(&self, image: &Tensor, label: usize) -> Result<ScalarLoss> {
        let pass = self.forward(image)?;
        Ok(cross_entropy_loss(&pass.probs, label)?.0)
    }

    /// Loss and exact gradients with respect to every parameter and the input.
    pub fn sample_gradient(&self, image: &Tensor, label: usize) -> Result<SampleGradient> {
        let pass = self.forward(image)?;
        self.backward(&pass, label)
    }

    pub fn backward(&self, pass: &ForwardPass, label: usize) -> Result<SampleGradient> {
        let (loss, grad_logits) = cross_entropy_loss(&pass.probs, label)?;
        let cache = &pass.cache;
        let fc = linear_backward(&Tensor::vector(grad_logits), &cache.flat, &self.params.fc_weight)?;

        let mut grads = self.params.zeros_like();
        grads.fc_weight = fc.weight;
        grads.fc_bias = fc.bias;

        let mut g = fc.input.reshape(&cache.final_shape)?;
        for l in (0..NUM_CONV_LAYERS).rev() {
            if let Some(p) = POOL_AFTER.iter().position(|&q| q == l) {
                g = maxpool2x2_backward(&g, &cache.pool_argmax[p], &cache.pool_inputs[p])?;
            }
            g = relu_backward(&g, &cache.pre_activations[l])?;
            let conv = conv2d_backward(&g, &cache.conv_inputs[l], &self.params.conv[l].weight)?;
            grads.conv[l].weight = conv.weight;
            grads.conv[l].bias = conv.bias;
            g = conv.input;
        }
        Ok(SampleGradient { loss, params: grads, input: g, correct: pass.prediction() == label })
    }

    /// Mean loss and mean gradient over a batch.
    ///
    /// Samples are processed in blocks of eight; each block is summed in
    /// sample order and the block sums are added in block order, so the
    /// result does not depend on `exec`.
    pub fn batch_gradient(&self, images: &[Tensor], labels: &[usize], exec: Execution) -> Result<BatchGradient> {
        if images.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if images.len() != labels.len() {
            return Err(Error::LengthMismatch { left: images.len(), right: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(Error::ClassOutOfRange { index: bad, num_classes: self.config.num_classes });
        }
        let blocks = images.len().div_ceil(GRAD_BLOCK);
        let partials = exec.map_range(blocks, |b| -> Result<(f64, Params, usize)> {
            let lo = b * GRAD_BLOCK;
            let hi = (lo + GRAD_BLOCK).min(images.len());
            let mut first = self.sample_gradient(&images[lo], labels[lo])?;
            let mut loss = first.loss.value();
            let mut correct = usize::from(first.correct);
            for i in lo + 1..hi {
                let s = self.sample_gradient(&images[i], labels[i])?;
                first.params.add_assign(&s.params);
                loss += s.loss.value();
                correct += usize::from(s.correct);
            }
            Ok((loss, first.params, correct))
        });
        let mut partials = partials.into_iter();
        let (mut loss, mut sum, mut correct) = partials.next().expect("non-empty batch")?;
        for p in partials {
            let (l, g, c) = p?;
            loss += l;
            sum.add_assign(&g);
            correct += c;
        }
        let n = images.len() as f64;
        sum.scale(1.0 / n);
        Ok(BatchGradient { mean_loss: ScalarLoss::new(loss / n), params: sum, correct })
    }

    /// `velocity <- momentum * velocity + grad; param <- param - lr * velocity`.
    pub fn apply_gradient(&mut self, grad: &Params) {
        let (lr, mu) = (self.config.learning_rate, self.config.momentum);
        let params = self.params.tensors_mut();
        let velocity = self.velocity.tensors_mut();
        for ((p, v), g) in params.into_iter().zip(velocity).zip(grad.tensors()) {
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = mu * *vv + gv;
                *pv -= lr * *vv;
            }
        }
    }

    /// One SGD-momentum step; returns the batch's mean loss before the update.
    pub fn train_step(&mut self, images: &[Tensor], labels: &[usize]) -> Result<ScalarLoss> {
        self.train_step_with(images, labels, Execution::default()).map(|g| g.mean_loss)
    }

    pub fn train_step_with(&mut self, images: &[Tensor], labels: &[usize], exec: Execution) -> Result<BatchGradient> {
        let grad = self.batch_gradient(images, labels, exec)?;
        self.apply_gradient(&grad.params);
        Ok(grad)
    }

    /// `config.epochs` passes over `data`, reshuffled each epoch from `seed`.
    pub fn train(&mut self, data: &ImageDataset, seed: u64) -> Result<TrainLog> {
        self.train_with(data, seed, Execution::default(), |_| {})
    }

    pub fn train_with(
        &mut self,
        data: &ImageDataset,
        seed: u64,
        exec: Execution,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<TrainLog> {
        self.check_dataset(data)?;
        let mut log = TrainLog::default();
        for epoch in 0..self.config.epochs {
            let mut loss_sum = 0.0;
            let mut correct = 0;
            for batch in batch_indices(data.len(), self.config.batch_size, seed, epoch as u64) {
                let images: Vec<Tensor> = batch.iter().map(|&i| data.image_tensor(i)).collect();
                let labels: Vec<usize> = batch.iter().map(|&i| data.label(i)).collect();
                let g = self.train_step_with(&images, &labels, exec)?;
                loss_sum += g.mean_loss.value() * batch.len() as f64;
                correct += g.correct;
            }
            let record = EpochRecord {
                epoch: epoch + 1,
                mean_loss: loss_sum / data.len() as f64,
                train_accuracy: correct as f64 / data.len() as f64,
            };
            log::info!(
                "epoch {}: loss {:.5} train acc {:.4}",
                record.epoch,
                record.mean_loss,
                record.train_accuracy
            );
            on_epoch(&record);
            log.epochs.push(record);
        }
        Ok(log)
    }

    pub fn evaluate(&self, data: &ImageDataset) -> Result<Evaluation> {
        self.evaluate_with(data, Execution::default())
    }

    /// Accuracy and argmax predictions (ties to the lowest class index).
    pub fn evaluate_with(&self, data: &ImageDataset, exec: Execution) -> Result<Evaluation> {
        self.check_dataset(data)?;
        let predictions = exec
            .map_range(data.len(), |i| self.forward(&data.image_tensor(i)).map(|p| p.prediction()))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let correct = predictions.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(Evaluation { accuracy: correct as f64 / data.len() as f64, predictions })
    }

    pub(crate) fn check_dataset(&self, data: &ImageDataset) -> Result<()> {
        if data.channels() != self.config.input_channels {
            return Err(Error::Dataset(format!(
                "dataset has {} channels, model expects {}",
                data.channels(),
                self.config.input_channels
            )));
        }
        if data.num_classes() > self.config.num_classes {
            return Err(Error::Dataset(format!(
                "dataset has {} classes, model has {}",
                data.num_classes(),
                self.config.num_classes
            )));
        }
        Ok(())
    }
}

fn fill_uniform(weight: &mut Tensor, rng: &mut SplitMix64) {
    let fan_in: usize = weight.shape()[1..].iter().product();
    let bound = (6.0 / fan_in as f64).sqrt();
    weight.data_mut().iter_mut().for_each(|w| *w = rng.uniform(-bound, bound));
}
