//! `cae gen-outliers` — generate an outlier, noise, mixture, or hardened
//! outlier batch as a packed tensor plus a manifest JSON.

use crate::provenance::file_sha256;
use cae_core::attacks::{evade_class, reconstruction_descent};
use cae_core::baselines::NOISE_CLASS;
use cae_core::datagen::{
    blended_noise, centered_noise_patch, mixtures, natural_outliers, noise_outliers, save_images,
    stripe_patterns,
};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Args)]
pub struct GenOutliersArgs {
    /// What to generate: `type1` (blended noise), `type2` (stripes),
    /// `type3` (centered patch), `type4` (natural grayscales), `noise`
    /// (per-image mixing ratio), `mixture` (two-digit overlays),
    /// `type1-adv-cae` / `type1-adv-baseline` (type-1 hardened against a
    /// trained model).
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; files are `<kind>.tensor` and
    /// `<kind>.manifest.json`.
    #[arg(long, default_value = "outliers")]
    pub out: PathBuf,
    /// 32x32 RGB record file for `type4`.
    #[arg(long, default_value = "data/natural32/patches.bin.gz")]
    pub natural: PathBuf,
    /// MNIST directory for `mixture` sources (test split).
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Trained checkpoint for the hardened kinds (autoencoder for
    /// `type1-adv-cae`, eleven-class baseline for `type1-adv-baseline`).
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Per-pixel change bound for the hardened kinds.
    #[arg(long, default_value_t = 0.1)]
    pub budget: f32,
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f32,
}

pub fn run(args: GenOutliersArgs) -> anyhow::Result<i32> {
    anyhow::ensure!(args.n >= 1, "need n >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut extra = serde_json::Map::new();
    let images = match args.kind.as_str() {
        "type1" => blended_noise(&mut rng, args.n),
        "type2" => stripe_patterns(&mut rng, args.n),
        "type3" => centered_noise_patch(&mut rng, args.n),
        "type4" => natural_outliers(&args.natural, args.n)?,
        "noise" => noise_outliers(&mut rng, args.n),
        "mixture" => {
            let set = super::load_split(&args.data_dir, false)?;
            let (mixed, sources) = mixtures(&mut rng, &set.images, &set.labels, args.n);
            extra.insert(
                "sources".into(),
                serde_json::to_value(
                    sources
                        .iter()
                        .map(|s| (s.first_label, s.second_label))
                        .collect::<Vec<_>>(),
                )?,
            );
            extra.insert("data_checksum".into(), set.checksum.into());
            mixed
        }
        kind @ ("type1-adv-cae" | "type1-adv-baseline") => {
            let ckpt = args
                .ckpt
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("{kind} needs --ckpt"))?;
            let base = blended_noise(&mut rng, args.n);
            extra.insert("budget".into(), args.budget.into());
            extra.insert("ckpt".into(), ckpt.display().to_string().into());
            if kind == "type1-adv-cae" {
                let (mut model, _) = super::load_cae_or_hint(ckpt)?;
                reconstruction_descent(&mut model, &base, args.budget, args.step_size)?
            } else {
                let (mut net, _) = super::load_baseline_or_hint(ckpt, "outlier-11")?;
                evade_class(&mut net, &base, NOISE_CLASS, args.budget, args.step_size)?
            }
        }
        other => anyhow::bail!(
            "unknown kind {other:?} (type1|type2|type3|type4|noise|mixture|type1-adv-cae|type1-adv-baseline)"
        ),
    };

    std::fs::create_dir_all(&args.out)?;
    let tensor_path = args.out.join(format!("{}.tensor", args.kind));
    save_images(&tensor_path, &images)?;
    let mut manifest = serde_json::json!({
        "kind": args.kind,
        "seed": args.seed,
        "count": images.outer(),
        "shape": images.shape(),
        "checksum": file_sha256(&tensor_path)?,
    });
    manifest
        .as_object_mut()
        .expect("object literal")
        .extend(extra);
    let manifest_path = args.out.join(format!("{}.manifest.json", args.kind));
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    eprintln!(
        "wrote {} images to {} (manifest {})",
        images.outer(),
        tensor_path.display(),
        manifest_path.display()
    );
    Ok(0)
}
