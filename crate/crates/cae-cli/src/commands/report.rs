//! `cae report` — re-render tables and figure montages from the raw logs
//! an `eval` run left behind. Rendering is a pure function of the log
//! bytes, so running it twice over the same logs writes identical files.

use super::tables;
use anyhow::Context;
use clap::Args;
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Args)]
pub struct ReportArgs {
    /// Directory holding `<experiment>.samples.csv` logs and
    /// `*.tensor` figure files (an `eval` output directory).
    #[arg(long)]
    pub logs: PathBuf,
    /// Comma-separated output formats: `md`, `csv`, `png`.
    #[arg(long, default_value = "md,csv")]
    pub format: String,
    /// Where to write rendered files (default: the logs directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ReportArgs) -> anyhow::Result<i32> {
    let mut formats = BTreeSet::new();
    for f in args.format.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        anyhow::ensure!(
            matches!(f, "md" | "csv" | "png"),
            "unknown format {f:?} (md | csv | png)"
        );
        formats.insert(f);
    }
    anyhow::ensure!(!formats.is_empty(), "no output format requested");
    let out_dir = args.out.clone().unwrap_or_else(|| args.logs.clone());
    std::fs::create_dir_all(&out_dir)?;

    // Sorted file names, so every run renders in the same order.
    let mut logs: Vec<(String, PathBuf)> = Vec::new();
    let mut tensors: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(&args.logs)
        .with_context(|| format!("reading {}", args.logs.display()))?
    {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(exp) = name.strip_suffix(".samples.csv") {
            logs.push((exp.to_owned(), path.clone()));
        } else if name.ends_with(".tensor") {
            tensors.push(path.clone());
        }
    }
    logs.sort();
    tensors.sort();

    let mut rendered = 0usize;
    let mut sections: Vec<String> = Vec::new();
    for (exp, path) in &logs {
        if !tables::KNOWN_EXPERIMENTS.contains(&exp.as_str()) {
            eprintln!("skipping {}: no aggregator for {exp:?}", path.display());
            continue;
        }
        let raw = std::fs::read_to_string(path)?;
        let table = tables::aggregate(exp, &raw)
            .with_context(|| format!("aggregating {}", path.display()))?;
        if formats.contains("csv") {
            std::fs::write(out_dir.join(format!("{exp}.csv")), table.to_csv())?;
            rendered += 1;
        }
        if formats.contains("md") {
            let md = table.to_markdown();
            std::fs::write(out_dir.join(format!("{exp}.md")), &md)?;
            sections.push(format!("## {exp}\n\n{md}"));
            rendered += 1;
        }
    }
    if formats.contains("md") && !sections.is_empty() {
        std::fs::write(
            out_dir.join("report.md"),
            format!("# Evaluation report\n\n{}", sections.join("\n")),
        )?;
        rendered += 1;
    }

    if formats.contains("png") {
        for path in &tensors {
            let images = cae_core::datagen::load_images(path)?;
            let tiles: Vec<Vec<f32>> = (0..images.outer())
                .map(|i| images.row(i).iter().map(|&v| v.clamp(0.0, 1.0)).collect())
                .collect();
            let rows: Vec<&[Vec<f32>]> = tiles.chunks(8).collect();
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .context("tensor file name")?;
            super::list_classify::render_grid(&rows, &out_dir.join(format!("{stem}.png")))?;
            rendered += 1;
        }
    }

    if rendered == 0 {
        eprintln!("nothing to render in {}", args.logs.display());
    } else {
        eprintln!("rendered {rendered} files to {}", out_dir.display());
    }
    Ok(0)
}
