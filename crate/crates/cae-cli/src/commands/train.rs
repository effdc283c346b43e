//! `cae train` — train the autoencoder pair and write checkpoint, per-epoch
//! CSV, and a JSON report with provenance.

use crate::provenance::Provenance;
use anyhow::Context;
use cae_core::training::{train, EpochStats, TrainConfig};
use cae_core::{checkpoint, CaeModel};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct TrainArgs {
    /// Directory holding the IDX train/test files.
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Checkpoint output path.
    #[arg(long, default_value = "artifacts/cae-default.ckpt")]
    pub out: PathBuf,
    /// Largest label (labels run 0..=o).
    #[arg(long, default_value_t = 9)]
    pub max_label: usize,
    /// Code entries per label block.
    #[arg(long, default_value_t = 10)]
    pub block_len: usize,
    #[arg(long, default_value_t = 50.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Projection-weight margin in the termination bound.
    #[arg(long, default_value_t = 80.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 60)]
    pub max_epochs: usize,
    /// Inner ascent steps per batch (0 = plain joint objective).
    #[arg(long, default_value_t = 10)]
    pub attack_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub attack_step_size: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Cap on training samples (0 = all); for smoke tests.
    #[arg(long, default_value_t = 0)]
    pub limit: usize,
    /// Fraction of samples that must meet the margin bound to terminate.
    #[arg(long, default_value_t = 0.95)]
    pub quorum: f64,
    /// Mean joint loss that must also be reached to terminate.
    #[arg(long, default_value_t = 0.02)]
    pub loss_ceiling: f64,
    /// Continue training from an existing checkpoint instead of starting
    /// from fresh weights.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let mut set = super::load_split(&args.data_dir, true)?;
    if args.limit > 0 && args.limit < set.len() {
        set = set.slice(0..args.limit);
    }
    eprintln!(
        "training on {} images from {}",
        set.len(),
        args.data_dir.display()
    );

    let cfg = TrainConfig {
        gamma: args.gamma,
        lambda: args.lambda,
        margin: args.margin,
        quorum: args.quorum,
        loss_ceiling: args.loss_ceiling,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        attack_steps: args.attack_steps,
        attack_step_size: args.attack_step_size,
        seed: args.seed,
    };
    let mut model = match &args.resume {
        Some(ckpt) => {
            let (model, _) = super::load_cae_or_hint(ckpt)?;
            eprintln!("resuming from {}", ckpt.display());
            model
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            CaeModel::new(&mut rng, args.max_label, args.block_len)?
        }
    };

    let mut log = |e: &EpochStats| {
        eprintln!(
            "epoch {:>2}: enc {:.4}  rec {:.4}  joint {:.4}  bound {:.1}%  ({:.0}s)",
            e.epoch,
            e.mean_encoder_loss,
            e.mean_reconstruction_loss,
            e.mean_joint_loss,
            e.bound_fraction * 100.0,
            e.seconds
        );
    };
    let report = train(&mut model, &set.images, &set.labels, &cfg, Some(&mut log))?;

    if let Some(dir) = args.out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let meta = serde_json::json!({
        "config": cfg,
        "data_checksum": set.checksum,
        "train_samples": set.len(),
        "terminated_early": report.terminated_early,
        "epochs_run": report.epochs.len(),
        "total_seconds": report.total_seconds,
        "resumed_from": args.resume.as_ref().map(|p| p.display().to_string()),
    });
    checkpoint::save_cae(&args.out, &model, meta).context("saving checkpoint")?;

    let base = args.out.with_extension("");
    let csv_path = base.with_extension("train.csv");
    let json_path = base.with_extension("train.json");
    std::fs::write(&csv_path, report.to_csv())?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;

    Provenance::new(t0.elapsed().as_secs_f64())
        .output(&args.out)?
        .output(&csv_path)?
        .output(&json_path)?
        .write(&base.with_extension("provenance.json"))?;

    eprintln!(
        "done: {} epochs in {:.0}s (early termination: {}), checkpoint {}",
        report.epochs.len(),
        report.total_seconds,
        report.terminated_early,
        args.out.display()
    );
    Ok(0)
}
