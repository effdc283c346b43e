//! `cae verify-existence` — build a piecewise-constant encoder/decoder
//! pair over labeled box-union sets and verify its recovery/overlap
//! properties by Monte Carlo. Exit code 3 when a property fails.

use crate::provenance::Provenance;
use cae_core::existence::{
    build_piecewise_ed, check_resolution, verify_theorem, BoxN, OpenSetSpec, Region,
};
use clap::Args;
use serde::Deserialize;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct VerifyExistenceArgs {
    /// JSON description of the labeled open sets (see `ConfigSet`).
    #[arg(long)]
    pub config: PathBuf,
    /// Grid resolution: cubes have side `1/k`.
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Recovery radius to verify.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Tolerated unrecovered fraction per label.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Code dimension of the target boxes.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

/// One labeled set in the config file: a union of axis-aligned open boxes
/// inside the unit cube.
#[derive(Deserialize)]
struct ConfigSet {
    label: usize,
    boxes: Vec<ConfigBox>,
}

#[derive(Deserialize)]
struct ConfigBox {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Config {
    Wrapped { sets: Vec<ConfigSet> },
    Bare(Vec<ConfigSet>),
}

pub fn run(args: VerifyExistenceArgs) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let text = std::fs::read_to_string(&args.config)?;
    let config: Config = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.config.display()))?;
    let config_sets = match config {
        Config::Wrapped { sets } => sets,
        Config::Bare(sets) => sets,
    };
    anyhow::ensure!(!config_sets.is_empty(), "config lists no sets");

    let mut sets = Vec::with_capacity(config_sets.len());
    for cs in &config_sets {
        let boxes = cs
            .boxes
            .iter()
            .map(|b| BoxN::new(b.min.clone(), b.max.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        sets.push(OpenSetSpec {
            label: cs.label,
            region: Region::Boxes(boxes),
        });
    }
    let n = sets[0].region.dim();
    check_resolution(n, args.m, args.k, args.gamma)?;
    let ed = build_piecewise_ed(&sets, args.m, args.k)?;
    let report = verify_theorem(&ed, &sets, args.eps, args.gamma, args.samples, args.seed)?;

    for lr in &report.per_label {
        eprintln!(
            "label {}: {} cubes (volume {:.4}), recovered {:.2}% (CI {:.2}–{:.2}%)",
            lr.label,
            lr.kept_cubes,
            lr.kept_volume,
            lr.recovered_fraction * 100.0,
            lr.recovered_ci.0 * 100.0,
            lr.recovered_ci.1 * 100.0
        );
    }
    eprintln!(
        "overlap {:.4}%, roundtrip mismatches {}, holds: {}",
        report.overlap_fraction * 100.0,
        report.roundtrip_mismatches,
        report.holds
    );

    let payload = serde_json::json!({
        "k": args.k,
        "m": args.m,
        "dimension": n,
        "seed": args.seed,
        "report": report,
    });
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&payload)?)?;
    Provenance::new(t0.elapsed().as_secs_f64())
        .input(&args.config)?
        .output(&args.out)?
        .write(&args.out.with_extension("provenance.json"))?;
    Ok(if report.holds { 0 } else { 3 })
}
