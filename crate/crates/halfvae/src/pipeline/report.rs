//! Run reports and metrics documents, the JSON artifacts downstream
//! commands and plots consume.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::ModelScore;
use crate::models::{EpochRecord, ModelKind, PosteriorSummary};
use crate::{Error, Result};

/// Low-noise loss evaluation at the configured `eval_samples`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Everything one training run produced, minus the parameters themselves
/// (those live in the checkpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: ModelKind,
    pub config_hash: String,
    pub seed: u64,
    /// One record per epoch, evaluated before that epoch's update.
    pub epochs: Vec<EpochRecord>,
    pub final_loss: FinalLoss,
    /// Epochs at which posterior-mean snapshots were written.
    pub snapshot_epochs: Vec<usize>,
    /// Aligned scores against the ground truth, when it was available.
    pub final_metrics: Option<ModelScore>,
    pub wall_clock_seconds: f64,
}

/// Evaluation artifact: aligned scores plus the posterior used to produce
/// them, with 95% bands in the model's own latent scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub model: ModelKind,
    pub config_hash: String,
    pub seed: u64,
    /// Indexed by ground-truth component.
    pub per_component_rmse: Vec<f64>,
    pub mean_rmse: f64,
    /// Estimated row -> truth row.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    pub posterior: PosteriorSummary,
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).expect("artifact serializes");
    json.push('\n');
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}
