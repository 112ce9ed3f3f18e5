//! MedMNIST v2 `.npz` archives.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::npy::{read_npy, write_npy, NpyArray, NpyData};
use super::{ImageDataset, IMAGE_SIDE};
use crate::error::{Error, Result};

/// Archive entries, in pooling order.
pub const MEDMNIST_KEYS: [(&str, &str); 3] =
    [("train_images", "train_labels"), ("val_images", "val_labels"), ("test_images", "test_labels")];

/// Loads an archive and pools its train, val and test splits, in that order,
/// into one dataset named after the file stem.
pub fn load_medmnist(path: impl AsRef<Path>) -> Result<ImageDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut archive =
        ZipArchive::new(Cursor::new(bytes)).map_err(|e| Error::Archive { path: path.into(), detail: e.to_string() })?;

    let mut channels = None;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (image_key, label_key) in MEDMNIST_KEYS {
        let img = read_entry(&mut archive, path, image_key)?;
        let lab = read_entry(&mut archive, path, label_key)?;
        let (n, c) = match img.shape.as_slice() {
            &[n, h, w] if h == IMAGE_SIDE && w == IMAGE_SIDE => (n, 1),
            &[n, h, w, c] if h == IMAGE_SIDE && w == IMAGE_SIDE && (c == 1 || c == 3) => (n, c),
            s => return Err(Error::Dataset(format!("{image_key}: unsupported image shape {s:?}"))),
        };
        let NpyData::U8(pixels) = img.data else {
            return Err(Error::Dataset(format!("{image_key}: images must be uint8")));
        };
        let split_labels = lab.to_labels()?;
        if lab.shape.first() != Some(&n) || split_labels.len() != n {
            return Err(Error::Dataset(format!(
                "{label_key}: {} labels for {n} images",
                split_labels.len()
            )));
        }
        if *channels.get_or_insert(c) != c {
            return Err(Error::Dataset(format!("{image_key}: channel count differs between splits")));
        }
        images.extend(to_channel_first(&pixels, n, c));
        labels.extend(split_labels);
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let name = path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    ImageDataset::new(name, channels.unwrap_or(1), images, labels, num_classes)
}

fn read_entry(archive: &mut ZipArchive<Cursor<Vec<u8>>>, path: &Path, key: &str) -> Result<NpyArray> {
    let name = format!("{key}.npy");
    let mut file = archive.by_name(&name).map_err(|e| match e {
        zip::result::ZipError::FileNotFound => Error::MissingKey { path: path.into(), key: key.into() },
        other => Error::Archive { path: path.into(), detail: other.to_string() },
    })?;
    let mut buf = Vec::with_capacity(file.size() as usize);
    file.read_to_end(&mut buf)
        .map_err(|e| Error::Archive { path: path.into(), detail: format!("{name}: {e}") })?;
    Ok(read_npy(&buf)?)
}

/// `[n, 28, 28, c]` to `[n, c, 28, 28]`.
fn to_channel_first(pixels: &[u8], n: usize, c: usize) -> Vec<u8> {
    if c == 1 {
        return pixels.to_vec();
    }
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = vec![0; pixels.len()];
    for i in 0..n {
        let (src, dst) = (&pixels[i * plane * c..(i + 1) * plane * c], &mut out[i * plane * c..(i + 1) * plane * c]);
        for p in 0..plane {
            for ch in 0..c {
                dst[ch * plane + p] = src[p * c + ch];
            }
        }
    }
    out
}

fn to_channel_last(pixels: &[u8], n: usize, c: usize) -> Vec<u8> {
    if c == 1 {
        return pixels.to_vec();
    }
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = vec![0; pixels.len()];
    for i in 0..n {
        let (src, dst) = (&pixels[i * plane * c..(i + 1) * plane * c], &mut out[i * plane * c..(i + 1) * plane * c]);
        for p in 0..plane {
            for ch in 0..c {
                dst[p * c + ch] = src[ch * plane + p];
            }
        }
    }
    out
}

/// Writes `data` in the MedMNIST layout. Samples keep their order and are
/// cut into train/val/test blocks of roughly 70/10/20 percent, so loading the
/// archive back yields the same dataset. Entries are stored uncompressed with
/// a fixed timestamp, making the output a pure function of `data`.
pub fn write_medmnist(data: &ImageDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = data.len();
    let n_train = 7 * n / 10;
    let n_val = n / 10;
    let bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)];
    let plane = data.channels() * IMAGE_SIDE * IMAGE_SIDE;

    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let archive_err = |e: zip::result::ZipError| Error::Archive { path: path.into(), detail: e.to_string() };
    for ((image_key, label_key), (lo, hi)) in MEDMNIST_KEYS.into_iter().zip(bounds) {
        let count = hi - lo;
        let mut shape = vec![count, IMAGE_SIDE, IMAGE_SIDE];
        if data.channels() == 3 {
            shape.push(3);
        }
        let pixels = to_channel_last(&data.raw_images()[lo * plane..hi * plane], count, data.channels());
        let labels = data.labels()[lo..hi].iter().map(|&l| l as u64).collect();
        let entries = [
            (image_key, NpyArray { shape, data: NpyData::U8(pixels) }),
            (label_key, NpyArray { shape: vec![count, 1], data: NpyData::U64(labels) }),
        ];
        for (key, array) in entries {
            zip.start_file(format!("{key}.npy"), options).map_err(archive_err)?;
            zip.write_all(&write_npy(&array)).map_err(|e| Error::io(path, e))?;
        }
    }
    let bytes = zip.finish().map_err(archive_err)?.into_inner();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
