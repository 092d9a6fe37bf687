//! Volume and mask persistence.

pub mod nifti;
pub mod rawbin;
