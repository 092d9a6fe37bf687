//! Ground-truth quality measures for segmentations and error maps.

pub mod dsc;
pub mod edt;
pub mod nsd;
pub mod sem;
pub mod stats;

pub use dsc::{binary_dice, dsc_sem, multiclass_dsc, ue_overlap};
pub use nsd::{boundary, nsd, per_class_nsd, surface_dice};
pub use sem::{sem_ground_truth, SemStack};
pub use stats::{mae, pearson_r, QualityScores};

/// Default surface-dice tolerance in voxels.
pub const DEFAULT_NSD_TOLERANCE: f64 = 1.0;
