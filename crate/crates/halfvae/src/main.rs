//! `halfvae` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 IO error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use halfvae::config::ExperimentConfig;
use halfvae::pipeline::{
    cmd_evaluate, cmd_evaluate_seeds, cmd_generate, cmd_plot, cmd_report, cmd_train,
    cmd_train_seeds, CHECKPOINT_FILE, SOURCES_FILE,
};

#[derive(Parser)]
#[command(
    name = "halfvae",
    about = "Blind source separation with an encoder-free VAE, a GMM-prior VAE, and a vanilla VAE",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth sources and mixed observations.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for sources.csv, observations.csv, mixing.json.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the configured model on generated observations.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding observations.csv (and sources.csv for scoring).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoint.json, report.json, snapshots.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run one independent job per seed into <out>/seed_<s>/.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Write zmu_epoch_<e>.csv every this many epochs.
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Score a checkpoint's posterior means against the ground truth.
    Evaluate {
        /// Directory holding observations.csv and sources.csv.
        #[arg(long)]
        data: PathBuf,
        /// Run directory with checkpoint.json; metrics.json is written here.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate <out>/seed_<s>/checkpoint.json for each seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Aggregate metrics.json files into a model-comparison table.
    Report {
        /// Directory tree searched for metrics.json files.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for table.json and table.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit per-figure CSV data and SVG renderings of a run directory.
    Plot {
        /// Directory holding the pipeline artifacts.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> halfvae::Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let config = ExperimentConfig::load(&config)?;
            let seed = config.resolved_seed(seed)?;
            let outputs = cmd_generate(&config, seed, &out)?;
            println!("wrote {}", outputs.sources.display());
            println!("wrote {}", outputs.observations.display());
            println!("wrote {}", outputs.mixing.display());
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            seeds,
            snapshot_every,
        } => {
            let config = ExperimentConfig::load(&config)?;
            match seeds {
                Some(seeds) if !seeds.is_empty() => {
                    let summary = cmd_train_seeds(&config, &seeds, &data, &out, snapshot_every)?;
                    println!(
                        "trained {} seeds of {}; mean rmse min/mean/max: {}",
                        summary.seeds.len(),
                        summary.model,
                        match (summary.mean_rmse_min, summary.mean_rmse_mean, summary.mean_rmse_max)
                        {
                            (Some(lo), Some(mid), Some(hi)) =>
                                format!("{lo:.4} / {mid:.4} / {hi:.4}"),
                            _ => "n/a (no ground truth found)".to_string(),
                        }
                    );
                }
                _ => {
                    let seed = config.resolved_seed(seed)?;
                    let outputs = cmd_train(&config, seed, &data, &out, snapshot_every)?;
                    println!("wrote {}", outputs.checkpoint.display());
                    println!("wrote {}", outputs.report.display());
                    if let Some(score) = &outputs.final_metrics {
                        println!("final mean rmse: {:.4}", score.mean_rmse);
                    }
                }
            }
        }
        Command::Evaluate { data, out, seeds } => match seeds {
            Some(seeds) if !seeds.is_empty() => {
                let truth = data.join(SOURCES_FILE);
                let summary = cmd_evaluate_seeds(&seeds, &data, &truth, &out)?;
                println!(
                    "evaluated {} seeds of {}; mean rmse min/mean/max: {}",
                    summary.seeds.len(),
                    summary.model,
                    match (summary.mean_rmse_min, summary.mean_rmse_mean, summary.mean_rmse_max) {
                        (Some(lo), Some(mid), Some(hi)) => format!("{lo:.4} / {mid:.4} / {hi:.4}"),
                        _ => "n/a".to_string(),
                    }
                );
            }
            _ => {
                let truth = data.join(SOURCES_FILE);
                let (path, doc) = cmd_evaluate(&out.join(CHECKPOINT_FILE), &data, &truth, &out)?;
                println!("wrote {}", path.display());
                println!("mean rmse: {:.4}", doc.mean_rmse);
            }
        },
        Command::Report { data, out } => {
            let outputs = cmd_report(&data, &out)?;
            println!("wrote {}", outputs.table_json.display());
            println!("wrote {}", outputs.table_csv.display());
            print!("{}", outputs.rendered);
        }
        Command::Plot { data, out } => {
            let written = cmd_plot(&data, &out)?;
            println!("wrote {} figure files to {}", written.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
