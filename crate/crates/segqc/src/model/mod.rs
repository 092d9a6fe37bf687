//! The multi-task quality-control network.

pub mod checkpoint;
pub mod config;
pub mod net;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::QcResUNetConfig;
pub use net::{ForwardPass, QcPrediction, QcResUNet};
