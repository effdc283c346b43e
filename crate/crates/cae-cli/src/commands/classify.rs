//! `cae classify` — open-world classification: per-image verdict CSV
//! (label or −1) with the evidence that decided it.

use crate::provenance::Provenance;
use cae_core::openworld::{classify_batched, score, Branch, Thresholds};
use clap::Args;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct ClassifyArgs {
    /// Trained autoencoder checkpoint.
    #[arg(long, default_value = "artifacts/cae-default.ckpt")]
    pub ckpt: PathBuf,
    /// Images: a packed tensor file or an IDX image file.
    #[arg(long)]
    pub input: PathBuf,
    /// Optional IDX label file; adds accuracy metrics next to the CSV.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Accept threshold on the reconstruction distance.
    #[arg(long, default_value_t = 0.04)]
    pub bs: f64,
    /// Refuse threshold on the reconstruction distance.
    #[arg(long, default_value_t = 0.09)]
    pub bu: f64,
    #[arg(long, default_value = "verdicts.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

pub fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::CloseAccept => "close-accept",
        Branch::FarRefuse => "far-refuse",
        Branch::CrossAccept => "cross-accept",
        Branch::CrossRefuse => "cross-refuse",
    }
}

pub fn run(args: ClassifyArgs) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let (mut model, _) = super::load_cae_or_hint(&args.ckpt)?;
    let images = super::load_input_images(&args.input)?;
    let th = Thresholds {
        accept: args.bs,
        refuse: args.bu,
    };
    let verdicts = classify_batched(&mut model, &images, th, args.batch)?;

    let mut csv = String::from("id,label,pseudo,dist_fhat,branch\n");
    for (i, v) in verdicts.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            i,
            v.label_i64(),
            v.pseudo_label,
            v.pseudo_distance,
            branch_name(v.branch)
        ));
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, csv)?;

    let refused = verdicts.iter().filter(|v| v.label.is_none()).count();
    eprintln!(
        "{} images: {} labeled, {} refused -> {}",
        verdicts.len(),
        verdicts.len() - refused,
        refused,
        args.out.display()
    );

    let mut prov = Provenance::new(t0.elapsed().as_secs_f64())
        .input(&args.ckpt)?
        .input(&args.input)?
        .output(&args.out)?;
    if let Some(label_path) = &args.labels {
        let (labels, _) = cae_core::datagen::load_idx_labels(label_path)?;
        anyhow::ensure!(
            labels.len() == verdicts.len(),
            "{} labels for {} images",
            labels.len(),
            verdicts.len()
        );
        let truth: Vec<Option<usize>> = labels.iter().map(|&l| Some(l as usize)).collect();
        let metrics = score(&verdicts, &truth)?;
        let metrics_path = args.out.with_extension("metrics.json");
        std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
        eprintln!(
            "accuracy {:.2}%  wrong {:.2}%  flagged {:.2}%  ({})",
            metrics.accuracy * 100.0,
            metrics.wrong_rate * 100.0,
            metrics.flagged_rate * 100.0,
            metrics_path.display()
        );
        prov = prov.input(label_path)?.output(&metrics_path)?;
    }
    prov.write(&args.out.with_extension("provenance.json"))?;
    Ok(0)
}
