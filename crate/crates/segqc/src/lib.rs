//! Automated quality control for 3D multi-class segmentation.
//!
//! The crate implements a multi-task 3D convolutional network that predicts
//! subject-level segmentation quality (Dice similarity and normalized surface
//! dice) together with per-tissue-class voxel-level segmentation error maps,
//! plus everything needed to exercise it end to end on synthetic phantom data:
//! dataset generation and degradation, histogram-balanced resampling, training
//! and ensembling, an uncertainty-estimation baseline, and Grad-CAM
//! explainability. Everything runs on the CPU with no external runtime.

// Link the system BLAS for ndarray's GEMM fast path.
use blas_src as _;
use openblas_src as _;

pub mod cli;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod explain;
pub mod hierarchy;
pub mod io;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod proxyseg;
pub mod ue;
pub mod volume;

pub use error::{Result, SegQcError};
pub use hierarchy::{BaseLabel, ClassHierarchy, DerivedClass, HierarchyKind, BACKGROUND};
pub use mask::{one_hot, to_multiclass, BinaryMaskStack, ConsistencyReport, LabelMask};
pub use volume::Volume;

pub use cli::cli_main;
