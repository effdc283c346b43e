//! `cae list-classify` — per-image label lists with probabilities, plus
//! optional PNG figure grids (input and every per-label reconstruction,
//! raw on top, standardized below).

use crate::provenance::Provenance;
use cae_core::listclassifier::{list_classify_batched, standardize, LcaeConfig};
use cae_core::model::IMAGE_SHAPE;
use clap::Args;
use image::{GrayImage, Luma};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Args)]
pub struct ListClassifyArgs {
    /// Trained autoencoder checkpoint.
    #[arg(long, default_value = "artifacts/cae-default.ckpt")]
    pub ckpt: PathBuf,
    /// Images: a packed tensor file or an IDX image file.
    #[arg(long)]
    pub input: PathBuf,
    /// Outlier sharpness.
    #[arg(long, default_value_t = 14.0)]
    pub b: f64,
    /// Emission threshold on the per-label probability.
    #[arg(long, default_value_t = 0.10)]
    pub d: f64,
    #[arg(long, default_value = "list.json")]
    pub out: PathBuf,
    /// Directory for per-image figure grids (omit to skip rendering).
    #[arg(long)]
    pub grids: Option<PathBuf>,
    /// Render grids only for the first this-many images.
    #[arg(long, default_value_t = 8)]
    pub grid_limit: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    l_dis: &'a [f64],
    d_dis: &'a [f64],
    e: &'a [f64],
}

#[derive(Serialize)]
struct Entry<'a> {
    id: usize,
    p_outlier: f64,
    probs: &'a [f64],
    emitted: Vec<usize>,
    diagnostics: Diagnostics<'a>,
}

pub fn run(args: ListClassifyArgs) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let (mut model, _) = super::load_cae_or_hint(&args.ckpt)?;
    let images = super::load_input_images(&args.input)?;
    let cfg = LcaeConfig { b: args.b, d: args.d };
    let verdicts = list_classify_batched(&mut model, &images, cfg, args.batch)?;

    let entries: Vec<Entry> = verdicts
        .iter()
        .enumerate()
        .map(|(id, v)| Entry {
            id,
            p_outlier: v.p_outlier,
            probs: &v.probs,
            emitted: v.emitted_labels(),
            diagnostics: Diagnostics {
                l_dis: &v.l_dis,
                d_dis: &v.d_dis,
                e: &v.e,
            },
        })
        .collect();
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&entries)?)?;

    let sizes: Vec<usize> = verdicts.iter().map(|v| v.emitted.len()).collect();
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
    eprintln!(
        "{} images: mean list size {:.2} -> {}",
        verdicts.len(),
        mean,
        args.out.display()
    );

    let mut prov = Provenance::new(t0.elapsed().as_secs_f64())
        .input(&args.ckpt)?
        .input(&args.input)?
        .output(&args.out)?;
    if let Some(grid_dir) = &args.grids {
        std::fs::create_dir_all(grid_dir)?;
        let n = args.grid_limit.min(images.outer());
        let head = images.slice_rows(0..n);
        let recons = model.reconstruct_all(&head)?;
        for i in 0..n {
            let mut tiles_raw: Vec<Vec<f32>> = vec![head.row(i).to_vec()];
            for r in &recons {
                tiles_raw.push(r.row(i).iter().map(|&v| v.clamp(0.0, 1.0)).collect());
            }
            let tiles_std: Vec<Vec<f32>> = tiles_raw.iter().map(|t| standardize(t)).collect();
            let path = grid_dir.join(format!("grid-{i:03}.png"));
            render_grid(&[&tiles_raw, &tiles_std], &path)?;
            prov = prov.output(&path)?;
        }
        eprintln!("wrote {n} figure grids to {}", grid_dir.display());
    }
    prov.write(&args.out.with_extension("provenance.json"))?;
    Ok(0)
}

/// Renders rows of 28x28 tiles (values in `[0,1]`) separated by gutters.
pub(super) fn render_grid(rows: &[&[Vec<f32>]], path: &Path) -> anyhow::Result<()> {
    const GUTTER: u32 = 2;
    let (h, w) = (IMAGE_SHAPE[1] as u32, IMAGE_SHAPE[2] as u32);
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0) as u32;
    anyhow::ensure!(cols > 0, "empty grid");
    let width = cols * w + (cols + 1) * GUTTER;
    let height = rows.len() as u32 * h + (rows.len() as u32 + 1) * GUTTER;
    let mut img = GrayImage::from_pixel(width, height, Luma([255u8]));
    for (ri, row) in rows.iter().enumerate() {
        for (ci, tile) in row.iter().enumerate() {
            anyhow::ensure!(tile.len() == (h * w) as usize, "tile size");
            let x0 = GUTTER + ci as u32 * (w + GUTTER);
            let y0 = GUTTER + ri as u32 * (h + GUTTER);
            for py in 0..h {
                for px in 0..w {
                    let v = tile[(py * w + px) as usize].clamp(0.0, 1.0);
                    img.put_pixel(x0 + px, y0 + py, Luma([(v * 255.0).round() as u8]));
                }
            }
        }
    }
    img.save(path)?;
    Ok(())
}
