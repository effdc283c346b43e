//! IDX container parsing (the MNIST distribution format).

use super::{read_maybe_gz, sha256_hex, LabeledImages};
use crate::error::{CaeError, Result};
use crate::tensor::Tensor;
use std::path::Path;

const MAGIC_U8_3D: u32 = 0x0000_0803;
const MAGIC_U8_1D: u32 = 0x0000_0801;

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Loads an IDX image file (unsigned bytes, 3 dimensions) as `[n, 1, h, w]`
/// floats in `[0, 1]`. Returns the tensor and the SHA-256 of the
/// decompressed bytes.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<(Tensor<f32>, String)> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let bad = |why: String| CaeError::Dataset(format!("{}: {why}", path.display()));
    if bytes.len() < 16 {
        return Err(bad("truncated IDX header".into()));
    }
    let magic = be_u32(&bytes, 0);
    if magic != MAGIC_U8_3D {
        return Err(bad(format!(
            "magic {magic:#010x}, expected {MAGIC_U8_3D:#010x} (u8 images)"
        )));
    }
    let n = be_u32(&bytes, 4) as usize;
    let h = be_u32(&bytes, 8) as usize;
    let w = be_u32(&bytes, 12) as usize;
    let want = 16 + n * h * w;
    if bytes.len() != want {
        return Err(bad(format!(
            "payload {} bytes, header promises {want}",
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Ok((
        Tensor::from_vec(&[n, 1, h, w], data)?,
        sha256_hex(&bytes),
    ))
}

/// Loads an IDX label file (unsigned bytes, 1 dimension).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<(Vec<u8>, String)> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let bad = |why: String| CaeError::Dataset(format!("{}: {why}", path.display()));
    if bytes.len() < 8 {
        return Err(bad("truncated IDX header".into()));
    }
    let magic = be_u32(&bytes, 0);
    if magic != MAGIC_U8_1D {
        return Err(bad(format!(
            "magic {magic:#010x}, expected {MAGIC_U8_1D:#010x} (u8 labels)"
        )));
    }
    let n = be_u32(&bytes, 4) as usize;
    if bytes.len() != 8 + n {
        return Err(bad(format!(
            "payload {} bytes, header promises {}",
            bytes.len(),
            8 + n
        )));
    }
    Ok((bytes[8..].to_vec(), sha256_hex(&bytes)))
}

/// Loads a matching image/label pair and cross-checks the counts. The
/// combined checksum hashes both file digests.
pub fn load_labeled_images(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledImages> {
    let (images, img_sum) = load_idx_images(&images_path)?;
    let (labels, lbl_sum) = load_idx_labels(&labels_path)?;
    if images.outer() != labels.len() {
        return Err(CaeError::Dataset(format!(
            "{} images but {} labels",
            images.outer(),
            labels.len()
        )));
    }
    let checksum = super::sha256_hex(format!("{img_sum}:{lbl_sum}").as_bytes());
    Ok(LabeledImages {
        images,
        labels,
        checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, n: usize, h: usize, w: usize, pix: &[u8]) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(&MAGIC_U8_3D.to_be_bytes()).unwrap();
        f.write_all(&(n as u32).to_be_bytes()).unwrap();
        f.write_all(&(h as u32).to_be_bytes()).unwrap();
        f.write_all(&(w as u32).to_be_bytes()).unwrap();
        f.write_all(pix).unwrap();
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(&MAGIC_U8_1D.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn parses_a_tiny_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        let pix: Vec<u8> = (0..2 * 4).map(|i| (i * 32) as u8).collect();
        write_images(&ip, 2, 2, 2, &pix);
        write_labels(&lp, &[7, 3]);
        let set = load_labeled_images(&ip, &lp).unwrap();
        assert_eq!(set.images.shape(), &[2, 1, 2, 2]);
        assert_eq!(set.labels, vec![7, 3]);
        // Pixel scaling: byte 255 -> 1.0, byte 0 -> 0.0.
        assert_eq!(set.images.data()[0], 0.0);
        assert!((set.images.data()[1] - 32.0 / 255.0).abs() < 1e-7);
        assert_eq!(set.checksum.len(), 64);
    }

    #[test]
    fn gzip_and_plain_load_identically() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs.idx");
        let pix: Vec<u8> = (0..9).collect();
        write_images(&ip, 1, 3, 3, &pix);
        let plain = load_idx_images(&ip).unwrap();

        let gz = dir.path().join("imgs.idx.gz");
        let raw = std::fs::read(&ip).unwrap();
        let f = std::fs::File::create(&gz).unwrap();
        let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        enc.finish().unwrap();
        let unpacked = load_idx_images(&gz).unwrap();
        assert_eq!(plain.0, unpacked.0);
        assert_eq!(plain.1, unpacked.1, "checksum covers decompressed bytes");
    }

    #[test]
    fn rejects_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        write_images(&ip, 2, 2, 2, &[0u8; 8]);
        write_labels(&lp, &[1]);
        assert!(load_labeled_images(&ip, &lp).is_err(), "count mismatch");

        let bad = dir.path().join("bad.idx");
        write_labels(&bad, &[1, 2]);
        assert!(load_idx_images(&bad).is_err(), "wrong magic");

        let cut = dir.path().join("cut.idx");
        write_images(&cut, 2, 2, 2, &[0u8; 7]);
        assert!(load_idx_images(&cut).is_err(), "short payload");
    }
}
