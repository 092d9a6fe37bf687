//! Training, ensembling, and evaluation.

pub mod augment;
pub mod ensemble;
pub mod evaluate;
pub mod folds;
pub mod store;
pub mod train;

pub use augment::{augment_triple, AugmentConfig};
pub use ensemble::{ensemble_predict, EnsemblePrediction, SEM_BINARIZE_THRESHOLD};
pub use evaluate::{evaluate, records_csv, write_report, EvalReport, MeanStd, RecordRow};
pub use folds::{fold_assignments, split_folds};
pub use store::{CaseStore, LoadedCase};
pub use train::{history_csv, train, validate, EpochStats, TrainConfig, TrainOutput};
