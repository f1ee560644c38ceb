//! File-based experiment pipeline behind the CLI.
//!
//! Signals travel as row-labeled CSV, everything else (config, mixing map,
//! checkpoints, reports, metrics, score tables) as JSON, all at full
//! round-trip precision so every stage is reproducible byte for byte.

mod checkpoint;
mod commands;
mod csvio;
mod plot;
mod report;

pub use checkpoint::Checkpoint;
pub use commands::{
    cmd_evaluate, cmd_evaluate_seeds, cmd_generate, cmd_plot, cmd_report, cmd_train,
    cmd_train_seeds, GenerateOutputs, ReportColumn, ReportOutputs, ReportTable, SeedsSummary,
    TrainOutputs, CHECKPOINT_FILE, METRICS_FILE, MIXING_FILE, OBSERVATIONS_FILE, REPORT_FILE,
    SOURCES_FILE,
};
pub use csvio::{read_labeled_matrix, write_labeled_matrix};
pub use report::{load_json, save_json, FinalLoss, MetricsDocument, RunReport};
