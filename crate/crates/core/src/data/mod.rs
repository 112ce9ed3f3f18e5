//! Image datasets: MedMNIST-layout archives, seeded splitting and batching,
//! and a synthetic generator.

mod npy;
mod npz;
mod synth;

pub use npy::{read_npy, write_npy, NpyArray, NpyData};
pub use npz::{load_medmnist, write_medmnist, MEDMNIST_KEYS};
pub use synth::synth_blobs;

use crate::error::{Error, Result};
use crate::rng::{SplitMix64, Stream};
use crate::tensor::Tensor;

/// Height and width of every image.
pub const IMAGE_SIDE: usize = 28;
const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Labeled 28×28 images stored as channel-first `u8` planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageDataset {
    name: String,
    channels: usize,
    images: Vec<u8>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl ImageDataset {
    /// `images` holds `labels.len()` images of `channels × 28 × 28` bytes.
    pub fn new(
        name: impl Into<String>,
        channels: usize,
        images: Vec<u8>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if !matches!(channels, 1 | 3) {
            return Err(Error::Dataset(format!("channels must be 1 or 3, got {channels}")));
        }
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if images.len() != labels.len() * channels * PIXELS {
            return Err(Error::Dataset(format!(
                "{} image bytes for {} samples of {channels}x28x28",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::ClassOutOfRange { index: bad, num_classes });
        }
        Ok(Self { name: name.into(), channels, images, labels, num_classes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn raw_images(&self) -> &[u8] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.channels * PIXELS;
        &self.images[i * size..(i + 1) * size]
    }

    /// Normalized `[C, 28, 28]` tensor of sample `i`.
    pub fn image_tensor(&self, i: usize) -> Tensor {
        Tensor::from_vec(&[self.channels, IMAGE_SIDE, IMAGE_SIDE], normalize(self.image(i)))
            .expect("image size fixed at construction")
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len() * self.channels * PIXELS);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.name.clone(), self.channels, images, labels, self.num_classes)
    }
}

/// Pixel intensities scaled to `[0, 1]`.
pub fn normalize(pixels: &[u8]) -> Vec<f64> {
    pixels.iter().map(|&p| f64::from(p) / 255.0).collect()
}

/// Number of training samples for a dataset of `n`: `ceil(0.7 n)`, capped
/// so that the test side keeps at least one sample.
pub fn train_count(n: usize) -> usize {
    (7 * n).div_ceil(10).min(n - 1)
}

/// Seeded 70/30 split.
pub fn split_70_30(data: &ImageDataset, seed: u64) -> Result<(ImageDataset, ImageDataset)> {
    let (train, test) = split_indices(data.len(), seed)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}

pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Dataset(format!("need at least 2 samples to split, got {n}")));
    }
    let mut perm = SplitMix64::derived(seed, Stream::Split, 0).permutation(n);
    let test = perm.split_off(train_count(n));
    Ok((perm, test))
}

/// Shuffled index batches for one epoch; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let perm = SplitMix64::derived(seed, Stream::Shuffle, epoch).permutation(n);
    perm.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Image tensors and labels for each batch of one epoch.
pub fn batches(
    data: &ImageDataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> impl Iterator<Item = (Vec<Tensor>, Vec<usize>)> + '_ {
    batch_indices(data.len(), batch_size, seed, epoch).into_iter().map(move |idx| {
        let images = idx.iter().map(|&i| data.image_tensor(i)).collect();
        let labels = idx.iter().map(|&i| data.label(i)).collect();
        (images, labels)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> ImageDataset {
        let images = (0..n * PIXELS).map(|i| (i / PIXELS) as u8).collect();
        ImageDataset::new("toy", 1, images, (0..n).map(|i| i % 2).collect(), 2).unwrap()
    }

    #[test]
    fn normalize_values() {
        assert_eq!(normalize(&[0, 255, 51]), vec![0.0, 1.0, 0.2]);
        // every value is the correctly rounded quotient: the exact residual
        // x*255 - p stays within half an ulp of x, scaled by 255
        for p in 1..=255u8 {
            let x = normalize(&[p])[0];
            let residual = x.mul_add(255.0, -f64::from(p)).abs();
            let ulp = f64::from_bits(x.to_bits() + 1) - x;
            assert!(residual <= 0.5 * ulp * 255.0, "p = {p}");
        }
    }

    #[test]
    fn split_sizes() {
        assert_eq!(train_count(10), 7);
        assert_eq!(train_count(9), 7);
        assert_eq!(train_count(2), 1);
        assert_eq!(train_count(3), 2);
        let (tr, te) = split_70_30(&toy(10), 1).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        assert!(split_70_30(&toy(1), 1).is_err());
    }

    #[test]
    fn split_is_partition_and_seeded() {
        let (a, b) = split_indices(50, 9).unwrap();
        let (a2, b2) = split_indices(50, 9).unwrap();
        assert_eq!((&a, &b), (&a2, &b2));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_ne!(split_indices(50, 10).unwrap().0, a);
    }

    #[test]
    fn subset_keeps_pixels() {
        let d = toy(5);
        let s = d.subset(&[3, 1]).unwrap();
        assert_eq!(s.image(0)[0], 3);
        assert_eq!(s.image(1)[0], 1);
        assert_eq!(s.labels(), &[1, 1]);
    }

    #[test]
    fn batch_sizes_and_partition() {
        let b = batch_indices(10, 4, 3, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_ne!(batch_indices(10, 10, 3, 0), batch_indices(10, 10, 3, 1));
        assert_eq!(batch_indices(10, 4, 3, 1), batch_indices(10, 4, 3, 1));
    }

    #[test]
    fn batches_yield_tensors() {
        let d = toy(5);
        let sizes: Vec<usize> = batches(&d, 2, 0, 0).map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.len()
        }).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn validation() {
        assert!(ImageDataset::new("x", 2, vec![0; 2 * PIXELS], vec![0], 2).is_err());
        assert!(ImageDataset::new("x", 1, vec![0; PIXELS], vec![2], 2).is_err());
        assert!(ImageDataset::new("x", 1, vec![0; PIXELS - 1], vec![0], 2).is_err());
        assert!(ImageDataset::new("x", 1, vec![], vec![], 2).is_err());
    }
}
