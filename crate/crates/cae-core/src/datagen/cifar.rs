//! 32x32 RGB binary records (the CIFAR-10 batch layout) converted to
//! grayscale 28x28 images.

use super::{read_maybe_gz, sha256_hex};
use crate::error::{CaeError, Result};
use crate::tensor::Tensor;
use std::path::Path;

const REC_LEN: usize = 1 + 3 * 32 * 32;

/// Area-weighted downsample of one 32x32 plane to 28x28.
///
/// Each target pixel averages the source region it covers, with fractional
/// rows/columns weighted by their overlap, so total mass is preserved.
fn area_resize_32_to_28(src: &[f32]) -> [f32; 28 * 28] {
    const S: f64 = 32.0 / 28.0;
    let mut out = [0f32; 28 * 28];
    for ti in 0..28 {
        let y0 = ti as f64 * S;
        let y1 = y0 + S;
        for tj in 0..28 {
            let x0 = tj as f64 * S;
            let x1 = x0 + S;
            let mut acc = 0.0f64;
            let mut weight = 0.0f64;
            let mut si = y0.floor() as usize;
            while (si as f64) < y1 {
                let wy = (y1.min(si as f64 + 1.0) - y0.max(si as f64)).max(0.0);
                let mut sj = x0.floor() as usize;
                while (sj as f64) < x1 {
                    let wx = (x1.min(sj as f64 + 1.0) - x0.max(sj as f64)).max(0.0);
                    acc += wy * wx * src[si.min(31) * 32 + sj.min(31)] as f64;
                    weight += wy * wx;
                    sj += 1;
                }
                si += 1;
            }
            out[ti * 28 + tj] = (acc / weight) as f32;
        }
    }
    out
}

/// Loads a batch file of 32x32 RGB records, averages channels to gray,
/// downsamples each image to 28x28, and returns `[n, 1, 28, 28]` in `[0, 1]`
/// plus the SHA-256 of the decompressed bytes. `limit` caps the record
/// count (0 = all).
pub fn load_cifar_grey28(path: impl AsRef<Path>, limit: usize) -> Result<(Tensor<f32>, String)> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    if bytes.is_empty() || bytes.len() % REC_LEN != 0 {
        return Err(CaeError::Dataset(format!(
            "{}: size {} is not a whole number of {REC_LEN}-byte records",
            path.display(),
            bytes.len()
        )));
    }
    let total = bytes.len() / REC_LEN;
    let n = if limit == 0 { total } else { limit.min(total) };
    let mut data = Vec::with_capacity(n * 28 * 28);
    let mut grey = [0f32; 32 * 32];
    for rec in bytes.chunks_exact(REC_LEN).take(n) {
        let planes = &rec[1..];
        for i in 0..32 * 32 {
            let r = planes[i] as f32;
            let g = planes[1024 + i] as f32;
            let b = planes[2048 + i] as f32;
            grey[i] = (r + g + b) / 3.0 / 255.0;
        }
        data.extend_from_slice(&area_resize_32_to_28(&grey));
    }
    Ok((
        Tensor::from_vec(&[n, 1, 28, 28], data)?,
        sha256_hex(&bytes),
    ))
}

/// Convenience wrapper naming the intent: natural-image grayscale 28x28
/// outliers from a 32x32 RGB record file.
pub fn natural_grey28(path: impl AsRef<Path>, limit: usize) -> Result<(Tensor<f32>, String)> {
    load_cifar_grey28(path, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_record_resizes_to_constant() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.bin");
        let mut rec = vec![0u8; REC_LEN];
        rec[0] = 3; // label byte, ignored
        for v in &mut rec[1..] {
            *v = 120;
        }
        std::fs::write(&p, &rec).unwrap();
        let (t, _) = load_cifar_grey28(&p, 0).unwrap();
        assert_eq!(t.shape(), &[1, 1, 28, 28]);
        for &v in t.data() {
            assert!((v - 120.0 / 255.0).abs() < 1e-6, "area average of a constant");
        }
    }

    #[test]
    fn grey_is_channel_mean_and_mass_is_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("two.bin");
        // R=30, G=60, B=90 everywhere -> grey 60/255; plus a second record
        // with a single bright pixel to check mass preservation.
        let mut bytes = vec![0u8; 2 * REC_LEN];
        for i in 0..1024 {
            bytes[1 + i] = 30;
            bytes[1 + 1024 + i] = 60;
            bytes[1 + 2048 + i] = 90;
        }
        bytes[REC_LEN + 1] = 255; // R of pixel (0,0) in record 2
        std::fs::write(&p, &bytes).unwrap();
        let (t, _) = load_cifar_grey28(&p, 0).unwrap();
        for &v in t.row(0) {
            assert!((v - 60.0 / 255.0).abs() < 1e-6);
        }
        // One bright source pixel of grey 255/3: total mass scales by the
        // area ratio (28/32)^2.
        let sum: f32 = t.row(1).iter().sum();
        let want = (255.0 / 3.0 / 255.0) * (28.0f32 / 32.0).powi(2);
        assert!((sum - want).abs() < 1e-4, "sum {sum} vs {want}");
    }

    #[test]
    fn rejects_ragged_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ragged.bin");
        std::fs::write(&p, vec![0u8; REC_LEN + 5]).unwrap();
        assert!(load_cifar_grey28(&p, 0).is_err());
    }

    #[test]
    fn vendored_patch_corpus_loads() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data/natural32/patches.bin.gz");
        if !root.exists() {
            return; // corpus is optional for unit tests
        }
        let (t, sum) = load_cifar_grey28(&root, 16).unwrap();
        assert_eq!(t.shape(), &[16, 1, 28, 28]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(sum.len(), 64);
    }
}
