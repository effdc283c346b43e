//! `cae` — train, evaluate, attack, and report on the
//! classification-autoencoder.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 failed check
//! (a verification subcommand found a violated property).

mod commands;
mod provenance;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cae", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder pair on an IDX image/label set.
    Train(commands::train::TrainArgs),
    /// Open-world classification of images: a label or a refusal.
    Classify(commands::classify::ClassifyArgs),
    /// List classification: per-image label lists with probabilities.
    ListClassify(commands::list_classify::ListClassifyArgs),
    /// Generate outlier/noise/mixture datasets as packed tensors.
    GenOutliers(commands::gen_outliers::GenOutliersArgs),
    /// Run gradient attacks against a trained model and score them.
    Attack(commands::attack::AttackArgs),
    /// Train a comparison baseline (plain, adversarially trained, or
    /// outlier-class CNN).
    TrainBaseline(commands::train_baseline::TrainBaselineArgs),
    /// Build and verify a constructive encoder/decoder pair on box unions.
    VerifyExistence(commands::verify_existence::VerifyExistenceArgs),
    /// Evaluate a trained model on the standard metric set.
    Eval(commands::eval::EvalArgs),
    /// Render evaluation outputs into CSV/Markdown/PNG reports.
    Report(commands::report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train::run(a),
        Command::Classify(a) => commands::classify::run(a),
        Command::ListClassify(a) => commands::list_classify::run(a),
        Command::GenOutliers(a) => commands::gen_outliers::run(a),
        Command::Attack(a) => commands::attack::run(a),
        Command::TrainBaseline(a) => commands::train_baseline::run(a),
        Command::VerifyExistence(a) => commands::verify_existence::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Report(a) => commands::report::run(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
