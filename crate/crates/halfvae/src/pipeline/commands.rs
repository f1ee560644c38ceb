//! The five pipeline commands. Each one reads and writes plain files, so
//! every stage can be rerun, diffed, and fed to the next stage or to
//! external tools.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::csvio::{read_labeled_matrix, write_labeled_matrix};
use super::plot;
use super::report::{load_json, save_json, FinalLoss, MetricsDocument, RunReport};
use crate::config::ExperimentConfig;
use crate::diffengine::{AdamHyper, Matrix};
use crate::eval::{align_components, ModelScore};
use crate::models::{draw_noise, train, Model, ModelKind, TrainOptions};
use crate::rng::{seeded, stream};
use crate::synth::{generate_sources, make_mixing, mix};
use crate::{Error, Result};

pub const SOURCES_FILE: &str = "sources.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const MIXING_FILE: &str = "mixing.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone)]
pub struct GenerateOutputs {
    pub sources: PathBuf,
    pub observations: PathBuf,
    pub mixing: PathBuf,
}

/// Writes `sources.csv`, `observations.csv`, and `mixing.json` into
/// `out_dir`; byte-identical on rerun with the same config and seed.
pub fn cmd_generate(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<GenerateOutputs> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let sources = generate_sources(&config.source_specs(), seed)?;
    let mixing = make_mixing(config.m, config.n, config.mixing_kind, seed)?;
    let observations = mix(&mixing, &sources)?;

    let out = GenerateOutputs {
        sources: out_dir.join(SOURCES_FILE),
        observations: out_dir.join(OBSERVATIONS_FILE),
        mixing: out_dir.join(MIXING_FILE),
    };
    write_labeled_matrix(&out.sources, "component", &sources)?;
    write_labeled_matrix(&out.observations, "channel", &observations)?;
    save_json(&out.mixing, &mixing)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub report: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub final_metrics: Option<ModelScore>,
}

/// Trains the configured model on `data_dir/observations.csv` and writes
/// `checkpoint.json`, `report.json`, and any `zmu_epoch_<e>.csv` snapshots
/// into `out_dir`.
pub fn cmd_train(
    config: &ExperimentConfig,
    seed: u64,
    data_dir: &Path,
    out_dir: &Path,
    snapshot_every: Option<usize>,
) -> Result<TrainOutputs> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started = Instant::now();

    let (_, x) = read_labeled_matrix(&data_dir.join(OBSERVATIONS_FILE))?;
    if x.rows() != config.m || x.cols() != config.l {
        return Err(Error::Config(format!(
            "data shape {}x{} does not match config m={} l={}",
            x.rows(),
            x.cols(),
            config.m,
            config.l
        )));
    }

    let mut model = Model::init(
        config.model,
        config.n,
        config.m,
        config.l,
        config.k,
        &config.hidden_dims,
        config.lambda,
        seed,
    )?;
    let opts = TrainOptions {
        epochs: config.epochs,
        hyper: AdamHyper {
            learning_rate: config.learning_rate,
            ..AdamHyper::default()
        },
        train_samples: config.train_samples,
        lambda_warmup: config.lambda_warmup,
        snapshot_every,
        seed,
    };
    let outcome = train(&mut model, &x, &opts)?;

    // Low-noise loss for the report; training noise stays untouched.
    let mut eval_rng = seeded(seed, stream::EVAL_NOISE);
    let eval_noise = draw_noise(config.n, config.l, config.eval_samples, &mut eval_rng);
    let final_breakdown = model.loss(&x, &eval_noise)?;

    let mut snapshots = Vec::new();
    for (epoch, means) in &outcome.snapshots {
        let path = out_dir.join(format!("zmu_epoch_{epoch}.csv"));
        write_labeled_matrix(&path, "component", means)?;
        snapshots.push(path);
    }

    // Score against the ground truth when it sits next to the observations.
    let truth_path = data_dir.join(SOURCES_FILE);
    let final_metrics = if truth_path.exists() {
        let (_, truth) = read_labeled_matrix(&truth_path)?;
        let (means, _) = model.posterior(&x)?;
        let a = align_components(&means, &truth)?;
        Some(ModelScore {
            model: config.model.as_str().to_string(),
            per_component_rmse: a.per_component_rmse,
            mean_rmse: a.mean_rmse,
            permutation: a.permutation,
            signs: a.signs,
        })
    } else {
        None
    };

    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    Checkpoint::from_model(&model, config, seed).save(&checkpoint_path)?;

    let report = RunReport {
        model: config.model,
        config_hash: config.hash_with_seed(seed),
        seed,
        epochs: outcome.records,
        final_loss: FinalLoss {
            total: final_breakdown.total,
            reconstruction: final_breakdown.reconstruction,
            kl: final_breakdown.kl,
        },
        snapshot_epochs: outcome.snapshots.iter().map(|(e, _)| *e).collect(),
        final_metrics: final_metrics.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let report_path = out_dir.join(REPORT_FILE);
    save_json(&report_path, &report)?;

    Ok(TrainOutputs {
        checkpoint: checkpoint_path,
        report: report_path,
        snapshots,
        final_metrics,
    })
}

/// Loads a checkpoint, extracts posterior means for the observations in
/// `data_dir`, aligns them against `truth_csv`, and writes `metrics.json`
/// into `out_dir`.
pub fn cmd_evaluate(
    checkpoint_path: &Path,
    data_dir: &Path,
    truth_csv: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, MetricsDocument)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let model = ckpt.to_model()?;

    let (_, x) = read_labeled_matrix(&data_dir.join(OBSERVATIONS_FILE))?;
    if x.rows() != ckpt.m || x.cols() != ckpt.l {
        return Err(Error::Config(format!(
            "data shape {}x{} does not match checkpoint m={} l={}",
            x.rows(),
            x.cols(),
            ckpt.m,
            ckpt.l
        )));
    }
    let (_, truth) = read_labeled_matrix(truth_csv)?;
    if truth.rows() != ckpt.n || truth.cols() != ckpt.l {
        return Err(Error::Config(format!(
            "truth shape {}x{} does not match checkpoint n={} l={}",
            truth.rows(),
            truth.cols(),
            ckpt.n,
            ckpt.l
        )));
    }

    let summary = model.posterior_summary(&x)?;
    let a = align_components(&summary.means, &truth)?;
    let doc = MetricsDocument {
        model: ckpt.model,
        config_hash: ckpt.config_hash.clone(),
        seed: ckpt.seed,
        per_component_rmse: a.per_component_rmse,
        mean_rmse: a.mean_rmse,
        permutation: a.permutation,
        signs: a.signs,
        posterior: summary,
    };
    let path = out_dir.join(METRICS_FILE);
    save_json(&path, &doc)?;
    Ok((path, doc))
}

/// One model's column in the aggregated comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub model: ModelKind,
    pub seeds: Vec<u64>,
    /// Per truth component, averaged over seeds.
    pub per_component_mean: Vec<f64>,
    pub mean_rmse_mean: f64,
    pub mean_rmse_min: f64,
    pub mean_rmse_max: f64,
}

/// Comparison table across models (and seeds), in the shape of the headline
/// accuracy table: component rows, model columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub components: usize,
    pub models: Vec<ReportColumn>,
}

impl ReportTable {
    /// Plain-text rendering with component rows and model columns.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = 14usize;
        out.push_str(&format!("{:<14}", "component"));
        for col in &self.models {
            out.push_str(&format!("{:>width$}", col.model.as_str()));
        }
        out.push('\n');
        for c in 0..self.components {
            out.push_str(&format!("{:<14}", format!("component_{c}")));
            for col in &self.models {
                out.push_str(&format!("{:>width$.4}", col.per_component_mean[c]));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<14}", "mean"));
        for col in &self.models {
            out.push_str(&format!("{:>width$.4}", col.mean_rmse_mean));
        }
        out.push('\n');
        if self.models.iter().any(|c| c.seeds.len() > 1) {
            out.push_str(&format!("{:<14}", "min..max"));
            for col in &self.models {
                out.push_str(&format!(
                    "{:>width$}",
                    format!("{:.3}..{:.3}", col.mean_rmse_min, col.mean_rmse_max)
                ));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ReportOutputs {
    pub table_json: PathBuf,
    pub table_csv: PathBuf,
    pub rendered: String,
}

/// Collects every `metrics.json` under `data_dir` (recursively), aggregates
/// per model across seeds, and writes `table.json` / `table.csv`.
pub fn cmd_report(data_dir: &Path, out_dir: &Path) -> Result<ReportOutputs> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut metric_files = Vec::new();
    collect_metrics_files(data_dir, &mut metric_files)?;
    metric_files.sort();
    if metric_files.is_empty() {
        return Err(Error::io(
            data_dir.join(METRICS_FILE),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no metrics.json found; run `halfvae evaluate` first",
            ),
        ));
    }

    let docs: Vec<MetricsDocument> = metric_files
        .iter()
        .map(|p| load_json(p))
        .collect::<Result<_>>()?;
    let components = docs[0].per_component_rmse.len();
    if docs.iter().any(|d| d.per_component_rmse.len() != components) {
        return Err(Error::Config(
            "metrics documents disagree on component count".into(),
        ));
    }

    let mut models = Vec::new();
    for kind in [ModelKind::HalfVae, ModelKind::VaeGmm, ModelKind::VanillaVae] {
        let group: Vec<&MetricsDocument> = docs.iter().filter(|d| d.model == kind).collect();
        if group.is_empty() {
            continue;
        }
        let count = group.len() as f64;
        let mut per_component_mean = vec![0.0; components];
        for d in &group {
            for (acc, v) in per_component_mean.iter_mut().zip(&d.per_component_rmse) {
                *acc += v / count;
            }
        }
        let means: Vec<f64> = group.iter().map(|d| d.mean_rmse).collect();
        let mut seeds: Vec<u64> = group.iter().map(|d| d.seed).collect();
        seeds.sort_unstable();
        models.push(ReportColumn {
            model: kind,
            seeds,
            per_component_mean,
            mean_rmse_mean: means.iter().sum::<f64>() / count,
            mean_rmse_min: means.iter().cloned().fold(f64::INFINITY, f64::min),
            mean_rmse_max: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let table = ReportTable { components, models };

    let table_json = out_dir.join("table.json");
    save_json(&table_json, &table)?;

    let mut csv = String::from("component");
    for col in &table.models {
        csv.push(',');
        csv.push_str(col.model.as_str());
    }
    csv.push('\n');
    for c in 0..table.components {
        csv.push_str(&format!("component_{c}"));
        for col in &table.models {
            csv.push_str(&format!(",{}", col.per_component_mean[c]));
        }
        csv.push('\n');
    }
    csv.push_str("mean");
    for col in &table.models {
        csv.push_str(&format!(",{}", col.mean_rmse_mean));
    }
    csv.push('\n');
    let table_csv = out_dir.join("table.csv");
    std::fs::write(&table_csv, csv).map_err(|e| Error::io(&table_csv, e))?;

    Ok(ReportOutputs {
        table_json,
        table_csv,
        rendered: table.render(),
    })
}

fn collect_metrics_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_metrics_files(&path, out)?;
        } else if path.file_name().map(|n| n == METRICS_FILE).unwrap_or(false) {
            out.push(path);
        }
    }
    Ok(())
}

/// Emits per-figure CSV data plus a minimal SVG rendering for every stage
/// found in `data_dir`. The CSV is the contract; the SVG is a convenience.
pub fn cmd_plot(data_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    plot::plot_all(data_dir, out_dir)
}

/// Aggregate of independent seeded runs of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsSummary {
    pub model: ModelKind,
    pub seeds: Vec<u64>,
    /// Per seed, in `seeds` order; absent when ground truth was missing.
    pub mean_rmse: Vec<Option<f64>>,
    pub mean_rmse_min: Option<f64>,
    pub mean_rmse_mean: Option<f64>,
    pub mean_rmse_max: Option<f64>,
}

fn summarize(model: ModelKind, seeds: &[u64], rmse: Vec<Option<f64>>) -> SeedsSummary {
    let present: Vec<f64> = rmse.iter().flatten().cloned().collect();
    let (min, mean, max) = if present.is_empty() {
        (None, None, None)
    } else {
        (
            Some(present.iter().cloned().fold(f64::INFINITY, f64::min)),
            Some(present.iter().sum::<f64>() / present.len() as f64),
            Some(present.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    SeedsSummary {
        model,
        seeds: seeds.to_vec(),
        mean_rmse: rmse,
        mean_rmse_min: min,
        mean_rmse_mean: mean,
        mean_rmse_max: max,
    }
}

/// Trains one run per seed concurrently into `out_root/seed_<s>/` and writes
/// `seeds_summary.json` aggregating the final mean RMSE.
pub fn cmd_train_seeds(
    config: &ExperimentConfig,
    seeds: &[u64],
    data_dir: &Path,
    out_root: &Path,
    snapshot_every: Option<usize>,
) -> Result<SeedsSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("seeds: need at least one".into()));
    }
    let results: Vec<Result<TrainOutputs>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let out_dir = out_root.join(format!("seed_{seed}"));
                scope.spawn(move || cmd_train(config, seed, data_dir, &out_dir, snapshot_every))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut rmse = Vec::with_capacity(seeds.len());
    for r in results {
        rmse.push(r?.final_metrics.map(|m| m.mean_rmse));
    }
    let summary = summarize(config.model, seeds, rmse);
    save_json(&out_root.join("seeds_summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates `out_root/seed_<s>/checkpoint.json` for each seed and writes
/// per-seed `metrics.json` plus an aggregated `seeds_summary.json`.
pub fn cmd_evaluate_seeds(
    seeds: &[u64],
    data_dir: &Path,
    truth_csv: &Path,
    out_root: &Path,
) -> Result<SeedsSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("seeds: need at least one".into()));
    }
    let results: Vec<Result<(PathBuf, MetricsDocument)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let run_dir = out_root.join(format!("seed_{seed}"));
                scope.spawn(move || {
                    cmd_evaluate(&run_dir.join(CHECKPOINT_FILE), data_dir, truth_csv, &run_dir)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut rmse = Vec::with_capacity(seeds.len());
    let mut model = None;
    for r in results {
        let (_, doc) = r?;
        model = Some(doc.model);
        rmse.push(Some(doc.mean_rmse));
    }
    let summary = summarize(model.expect("at least one seed"), seeds, rmse);
    save_json(&out_root.join("seeds_summary.json"), &summary)?;
    Ok(summary)
}
