//! `cae attack` — run a gradient attack against a trained model (the
//! autoencoder's code classifier or a baseline CNN, decided by checkpoint
//! kind) and write the adversaries plus a per-sample manifest.

use crate::provenance::Provenance;
use cae_core::attacks::{
    jsma_batch, outcomes_against, pgd, strong_outcomes, AttackOutcome, AttackTarget,
    ClassifierTarget, EncoderTarget, PgdOptions, StrongConfig,
};
use cae_core::checkpoint;
use cae_core::datagen::save_images;
use cae_core::nn::Net;
use cae_core::{CaeModel, Tensor};
use clap::Args;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct AttackArgs {
    /// Checkpoint to attack: an autoencoder (code classifier) or a
    /// baseline classifier.
    #[arg(long, default_value = "artifacts/cae-default.ckpt")]
    pub ckpt: PathBuf,
    /// Attack family: `pgd`, `jsma`, or `strong`.
    #[arg(long)]
    pub kind: String,
    /// Signed-gradient steps for `pgd` (each moves every pixel 0.01).
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Pixel budget for `jsma`.
    #[arg(long, default_value_t = 60)]
    pub k: usize,
    /// Second-stage per-pixel bound for `strong`.
    #[arg(long, default_value_t = 0.1)]
    pub bound: f32,
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f32,
    /// Tempering constant of the code classifier's loss.
    #[arg(long, default_value_t = 50.0)]
    pub gamma: f32,
    /// Which split to draw victims from: `test` or `train`.
    #[arg(long, default_value = "test")]
    pub dataset: String,
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// How many victims (first N of the split; 0 = all).
    #[arg(long, default_value_t = 1000)]
    pub limit: usize,
    /// Output directory; files are `adv.tensor` and `manifest.json`.
    #[arg(long, default_value = "attack-out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

enum Victim {
    Autoencoder(CaeModel),
    Classifier(Net<f32>),
}

#[derive(Serialize)]
struct SampleRecord {
    id: usize,
    label: u8,
    success: bool,
    linf: f64,
    l0: usize,
}

pub fn run(args: AttackArgs) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    if !args.ckpt.exists() {
        anyhow::bail!(
            "checkpoint {} not found — train one with `cae train` or `cae train-baseline`",
            args.ckpt.display()
        );
    }
    let mut victim = match checkpoint::load_cae(&args.ckpt) {
        Ok((model, _)) => Victim::Autoencoder(model),
        Err(_) => Victim::Classifier(checkpoint::load_classifier(&args.ckpt)?.0),
    };
    let mut set = super::load_split(&args.data_dir, args.dataset == "train")?;
    if args.dataset != "train" && args.dataset != "test" {
        anyhow::bail!("--dataset must be `test` or `train`, got {:?}", args.dataset);
    }
    if args.limit > 0 && args.limit < set.len() {
        set = set.slice(0..args.limit);
    }
    let labels: Vec<usize> = set.labels.iter().map(|&l| l as usize).collect();

    let mut adv_rows: Vec<f32> = Vec::with_capacity(set.images.len());
    let mut outcomes: Vec<AttackOutcome> = Vec::with_capacity(set.len());
    let mut start = 0usize;
    while start < set.len() {
        let end = (start + args.batch.max(1)).min(set.len());
        let x = set.images.slice_rows(start..end);
        let batch_labels = &labels[start..end];
        let batch_outcomes = match &mut victim {
            Victim::Autoencoder(model) if args.kind == "strong" => strong_outcomes(
                model,
                &x,
                batch_labels,
                args.bound,
                &StrongConfig {
                    step_size: args.step_size,
                    gamma: args.gamma,
                    ..StrongConfig::default()
                },
            )?,
            Victim::Autoencoder(model) => {
                let mut target = EncoderTarget::new(model, args.gamma);
                run_family(&mut target, &args, &x, batch_labels)?
            }
            Victim::Classifier(net) => {
                let mut target = ClassifierTarget::new(net);
                run_family(&mut target, &args, &x, batch_labels)?
            }
        };
        for o in &batch_outcomes {
            adv_rows.extend_from_slice(&o.image);
        }
        outcomes.extend(batch_outcomes);
        start = end;
        eprint!("\r{}/{} attacked", end, set.len());
    }
    eprintln!();

    let mut shape = set.images.shape().to_vec();
    shape[0] = outcomes.len();
    let adv = Tensor::from_vec(&shape, adv_rows)?;
    std::fs::create_dir_all(&args.out)?;
    let tensor_path = args.out.join("adv.tensor");
    save_images(&tensor_path, &adv)?;

    let samples: Vec<SampleRecord> = outcomes
        .iter()
        .enumerate()
        .map(|(id, o)| SampleRecord {
            id,
            label: set.labels[id],
            success: o.success,
            linf: o.linf,
            l0: o.l0,
        })
        .collect();
    let fooled = outcomes.iter().filter(|o| o.success).count();
    let manifest = serde_json::json!({
        "kind": args.kind,
        "ckpt": args.ckpt.display().to_string(),
        "dataset": args.dataset,
        "sample_selection": format!("first-{}", outcomes.len()),
        "steps": args.steps,
        "k": args.k,
        "bound": args.bound,
        "step_size": args.step_size,
        "fooled": fooled,
        "fooled_rate": fooled as f64 / outcomes.len().max(1) as f64,
        "data_checksum": set.checksum,
        "samples": samples,
    });
    let manifest_path = args.out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    Provenance::new(t0.elapsed().as_secs_f64())
        .input(&args.ckpt)?
        .output(&tensor_path)?
        .output(&manifest_path)?
        .write(&args.out.join("provenance.json"))?;
    eprintln!(
        "fooled {}/{} ({:.1}%) -> {}",
        fooled,
        outcomes.len(),
        100.0 * fooled as f64 / outcomes.len().max(1) as f64,
        args.out.display()
    );
    Ok(0)
}

/// Runs `pgd`, `jsma`, or classifier-side `strong` against any target.
fn run_family<T: AttackTarget>(
    target: &mut T,
    args: &AttackArgs,
    x: &Tensor<f32>,
    labels: &[usize],
) -> anyhow::Result<Vec<AttackOutcome>> {
    let plain = |step_size: f32| PgdOptions {
        step_size,
        ..PgdOptions::default()
    };
    match args.kind.as_str() {
        "pgd" => {
            let adv = pgd::<_, ChaCha8Rng>(target, x, labels, args.steps, plain(args.step_size), None)?;
            Ok(outcomes_against(target, x, &adv, labels)?)
        }
        "jsma" => Ok(jsma_batch(target, x, labels, args.k)?),
        "strong" => {
            // Against a plain classifier the second stage has no
            // reconstruction to agree with; it is simply more ascent
            // within `bound` of the first-stage output.
            let stage1 = pgd::<_, ChaCha8Rng>(target, x, labels, 20, plain(args.step_size), None)?;
            let steps2 = (args.bound / args.step_size).round() as usize;
            let adv = pgd::<_, ChaCha8Rng>(
                target,
                &stage1,
                labels,
                steps2,
                PgdOptions {
                    step_size: args.step_size,
                    epsilon: Some(args.bound),
                    ..PgdOptions::default()
                },
                None,
            )?;
            Ok(outcomes_against(target, x, &adv, labels)?)
        }
        other => anyhow::bail!("unknown attack kind {other:?} (pgd | jsma | strong)"),
    }
}
