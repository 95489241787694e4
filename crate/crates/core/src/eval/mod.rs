//! Cross-validated evaluation, AUROC and synthetic data.

mod auroc;
mod config;
mod cv;
mod folds;
mod synth;

pub use auroc::{auroc, roc_csv, roc_curve, RocPoint};
pub use config::ExperimentConfig;
pub use cv::{cross_validate, dataset_median_bandwidth, ChosenParams, ClassSummary, DatasetSummary, EvalReport, FoldAudit, FoldResult, Timings};
pub use folds::{derive_seed, stratified_folds};
pub use synth::{generate_synthetic, Profile, SyntheticDataset};
