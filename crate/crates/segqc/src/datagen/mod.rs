//! Synthetic dataset generation: phantoms, quality-diverse degradations,
//! snapshot segmentations, and histogram-balanced resampling.

pub mod balance;
pub mod manifest;
pub mod phantom;
pub mod seggen;
pub mod snapshot;
pub mod transform;

pub use balance::{
    build_balanced_index, build_balanced_sampler, quality_bin, BalanceMode, BalancedIndex,
    BalancedSampler, IndexFile, NUM_BINS,
};
pub use manifest::{CaseEntry, DatasetManifest, SegMeta, SegRecord};
pub use phantom::{generate_phantom, IntensityModel, PhantomSpec, RadiusRange};
pub use seggen::{seggen_degrade, Interval, SegGenParams};
pub use snapshot::{snapshot_segmentations, SnapshotRecord, SNAPSHOT_LR};
