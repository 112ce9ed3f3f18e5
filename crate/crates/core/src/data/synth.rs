use std::f64::consts::TAU;

use super::{ImageDataset, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::rng::{SplitMix64, Stream};

const PEAK: f64 = 200.0;
const NOISE: f64 = 40.0;
const ORBIT: f64 = 7.0;

/// Grayscale images with one Gaussian-intensity blob each. Class `k` puts
/// its blob on a circle around the image centre at angle `2πk / K`, with a
/// radius cycling through 2.5, 4 and 5.5 pixels, then adds uniform noise in
/// `[0, 40]`. Classes are interleaved: sample `i` has label `i % K`.
pub fn synth_blobs(num_classes: usize, samples_per_class: usize, seed: u64) -> Result<ImageDataset> {
    if num_classes < 2 {
        return Err(Error::InvalidConfig(format!("synthetic data needs >= 2 classes, got {num_classes}")));
    }
    if samples_per_class == 0 {
        return Err(Error::InvalidConfig("samples_per_class must be >= 1".into()));
    }
    let mut rng = SplitMix64::derived(seed, Stream::Synth, 0);
    let n = num_classes * samples_per_class;
    let mid = (IMAGE_SIDE as f64 - 1.0) / 2.0;
    let mut images = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % num_classes;
        let angle = TAU * k as f64 / num_classes as f64;
        let (cx, cy) = (mid + ORBIT * angle.cos(), mid + ORBIT * angle.sin());
        let radius = 2.5 + 1.5 * (k % 3) as f64;
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = PEAK * (-d2 / (2.0 * radius * radius)).exp() + rng.uniform(0.0, NOISE);
                images.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        labels.push(k);
    }
    ImageDataset::new("synth", 1, images, labels, num_classes)
}
