//! `cae train-baseline` — train a comparison CNN (the eleven-class
//! outlier-aware variant or the adversarially trained ten-class variant)
//! and write a kind-tagged checkpoint with per-epoch CSV and provenance.

use crate::provenance::Provenance;
use anyhow::Context;
use cae_core::baselines::{
    train_madry_cnn, train_outlier_cnn, BaselineConfig, BaselineEpoch, BaselineKind,
};
use cae_core::checkpoint;
use cae_core::datagen::noise_outliers;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct TrainBaselineArgs {
    /// Baseline kind: `outlier-11` or `madry-10`.
    #[arg(long)]
    pub kind: String,
    /// Directory holding the IDX train files.
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Checkpoint output path (default `artifacts/<kind>.ckpt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Perturbation ball radius for the adversarially trained variant
    /// (0 falls back to standard training).
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f32,
    #[arg(long, default_value_t = 10)]
    pub attack_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub attack_step_size: f32,
    /// Cap on training samples (0 = all); for smoke tests.
    #[arg(long, default_value_t = 0)]
    pub limit: usize,
}

pub fn run(args: TrainBaselineArgs) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let kind = match args.kind.as_str() {
        "outlier-11" => BaselineKind::Outlier11,
        "madry-10" => BaselineKind::Madry10,
        other => anyhow::bail!("unknown baseline kind {other:?} (outlier-11 | madry-10)"),
    };
    let mut set = super::load_split(&args.data_dir, true)?;
    if args.limit > 0 && args.limit < set.len() {
        set = set.slice(0..args.limit);
    }
    let cfg = BaselineConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        epsilon: args.epsilon,
        attack_steps: args.attack_steps,
        attack_step_size: args.attack_step_size,
    };
    eprintln!(
        "training {} baseline on {} images from {}",
        args.kind,
        set.len(),
        args.data_dir.display()
    );

    let mut log = |e: &BaselineEpoch| {
        eprintln!(
            "epoch {:>2}: loss {:.4}  acc {:.2}%  ({:.0}s)",
            e.epoch,
            e.mean_loss,
            e.train_accuracy * 100.0,
            e.seconds
        );
    };
    let noise_seed = args.seed.wrapping_add(1);
    let (net, epochs) = match kind {
        BaselineKind::Outlier11 => {
            // One noise image per digit image, same as the 1:1 batch mix.
            let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let noise = noise_outliers(&mut noise_rng, set.len());
            train_outlier_cnn(&set.images, &set.labels, &noise, &cfg, Some(&mut log))?
        }
        BaselineKind::Madry10 => train_madry_cnn(&set.images, &set.labels, &cfg, Some(&mut log))?,
    };

    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("artifacts/{}.ckpt", args.kind)));
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let meta = serde_json::json!({
        "kind": kind,
        "config": cfg,
        "noise_seed": if kind == BaselineKind::Outlier11 { Some(noise_seed) } else { None },
        "data_checksum": set.checksum,
        "train_samples": set.len(),
        "epochs_run": epochs.len(),
    });
    checkpoint::save_classifier(&out, &net, meta).context("saving checkpoint")?;

    let mut csv = String::from("epoch,mean_loss,train_accuracy,seconds\n");
    for e in &epochs {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.3}\n",
            e.epoch, e.mean_loss, e.train_accuracy, e.seconds
        ));
    }
    let base = out.with_extension("");
    let csv_path = base.with_extension("train.csv");
    std::fs::write(&csv_path, csv)?;

    Provenance::new(t0.elapsed().as_secs_f64())
        .output(&out)?
        .output(&csv_path)?
        .write(&base.with_extension("provenance.json"))?;

    eprintln!(
        "done: {} epochs in {:.0}s, checkpoint {}",
        epochs.len(),
        t0.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(0)
}
