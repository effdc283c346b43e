//! Data ingestion and synthetic data generation.
//!
//! Loaders (gzip-transparent, with content checksums):
//! - IDX image/label pairs (the MNIST container format),
//! - CIFAR-style 32x32 RGB binary records, converted to grayscale 28x28.
//!
//! Generators (all seeded, all emitting pixels in `[0, 1]`):
//! - four statistical outlier families (blended noise, stripe patterns,
//!   centered noise patches, natural-image grayscales),
//! - blended noise images with a per-image mixing ratio,
//! - two-digit mixture images (element-wise max of two differently labeled
//!   digits).
//!
//! Model-targeted outliers (gradient-crafted against a trained
//! autoencoder or classifier) live in [`crate::attacks`].

mod cifar;
mod idx;
mod outliers;

pub use cifar::{load_cifar_grey28, natural_grey28};
pub use idx::{load_idx_images, load_idx_labels, load_labeled_images};
pub use outliers::{
    blended_noise, centered_noise_patch, mixtures, natural_outliers, noise_outliers,
    stripe_patterns, Mixture,
};

use crate::error::{CaeError, Result};
use crate::tensor::Tensor;
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::Path;

/// A batch of images with one label per image.
#[derive(Debug, Clone)]
pub struct LabeledImages {
    /// `[n, 1, 28, 28]`, pixels in `[0, 1]`.
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
    /// SHA-256 of the decompressed source bytes, hex-encoded.
    pub checksum: String,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copies out a contiguous index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LabeledImages {
        LabeledImages {
            images: self.images.slice_rows(range.clone()),
            labels: self.labels[range].to_vec(),
            checksum: self.checksum.clone(),
        }
    }
}

/// Reads a file, transparently gunzipping if it starts with the gzip magic.
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::with_capacity(raw.len() * 4);
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| CaeError::Dataset(format!("{}: gzip: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let d = h.finalize();
    let mut s = String::with_capacity(64);
    for b in d {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

const IMG_MAGIC: &[u8; 4] = b"IMG1";

/// Writes a float tensor as a packed little-endian file
/// (magic, rank, dims, then `f32` data).
pub fn save_images(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + t.len() * 4);
    buf.extend_from_slice(IMG_MAGIC);
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a tensor written by [`save_images`].
pub fn load_images(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let bad = |why: &str| CaeError::Dataset(format!("{}: {why}", path.display()));
    if bytes.len() < 8 || &bytes[..4] != IMG_MAGIC {
        return Err(bad("not a packed image tensor"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rank > 8 || bytes.len() < 8 + rank * 8 {
        return Err(bad("truncated header"));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let at = 8 + i * 8;
        shape.push(u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize);
    }
    let n: usize = shape.iter().product();
    let data_at = 8 + rank * 8;
    if bytes.len() != data_at + n * 4 {
        return Err(bad("payload size does not match dims"));
    }
    let data = bytes[data_at..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::from_vec(&shape, data)
}
