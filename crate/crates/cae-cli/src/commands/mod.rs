//! Subcommand implementations.

pub mod attack;
pub mod classify;
pub mod eval;
pub mod gen_outliers;
pub mod list_classify;
pub mod report;
pub mod tables;
pub mod train;
pub mod train_baseline;
pub mod verify_existence;

use anyhow::Context;
use std::path::Path;

/// Loads the MNIST-layout train or test split from a data directory that
/// holds the four canonical IDX files (optionally gzipped).
pub fn load_split(data_dir: &Path, train: bool) -> anyhow::Result<cae_core::datagen::LabeledImages> {
    let (img, lbl) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    let pick = |stem: &str| -> anyhow::Result<std::path::PathBuf> {
        let gz = data_dir.join(format!("{stem}.gz"));
        if gz.exists() {
            return Ok(gz);
        }
        let plain = data_dir.join(stem);
        if plain.exists() {
            return Ok(plain);
        }
        anyhow::bail!("{} not found (looked for {stem}[.gz])", data_dir.display())
    };
    cae_core::datagen::load_labeled_images(pick(img)?, pick(lbl)?)
        .with_context(|| format!("loading split from {}", data_dir.display()))
}

/// Loads an image batch from either a packed tensor file or a bare IDX
/// image file, deciding by content.
pub fn load_input_images(path: &Path) -> anyhow::Result<cae_core::Tensor<f32>> {
    match cae_core::datagen::load_images(path) {
        Ok(t) => Ok(t),
        Err(packed_err) => {
            let (t, _) = cae_core::datagen::load_idx_images(path).map_err(|idx_err| {
                anyhow::anyhow!(
                    "{}: neither a packed tensor ({packed_err}) nor IDX images ({idx_err})",
                    path.display()
                )
            })?;
            Ok(t)
        }
    }
}

/// Loads an autoencoder checkpoint, pointing at the command that creates
/// it when missing.
pub fn load_cae_or_hint(
    path: &Path,
) -> anyhow::Result<(cae_core::CaeModel, serde_json::Value)> {
    if !path.exists() {
        anyhow::bail!(
            "checkpoint {} not found — train it with `cae train --out {}`",
            path.display(),
            path.display()
        );
    }
    Ok(cae_core::checkpoint::load_cae(path)?)
}

/// Loads a baseline classifier checkpoint, pointing at the command that
/// creates it when missing.
pub fn load_baseline_or_hint(
    path: &Path,
    kind: &str,
) -> anyhow::Result<(cae_core::nn::Net<f32>, serde_json::Value)> {
    if !path.exists() {
        anyhow::bail!(
            "checkpoint {} not found — train it with `cae train-baseline --kind {kind} --out {}`",
            path.display(),
            path.display()
        );
    }
    Ok(cae_core::checkpoint::load_classifier(path)?)
}
