//! Multi-modality 3D image volumes.

use ndarray::Array4;

use crate::error::{Result, SegQcError};

/// A multi-modality 3D floating-point image of shape `(m, D, H, W)`.
///
/// Immutable after construction; values are validated finite. Voxel spacing
/// is carried for provenance, metrics operate in voxel units by default.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Array4<f32>,
    spacing: [f64; 3],
    modality_names: Vec<String>,
}

impl Volume {
    pub fn new(data: Array4<f32>, spacing: [f64; 3], modality_names: Vec<String>) -> Result<Self> {
        let m = data.shape()[0];
        if m == 0 {
            return Err(SegQcError::InvalidConfig("volume needs at least one modality".into()));
        }
        if modality_names.len() != m {
            return Err(SegQcError::InvalidConfig(format!(
                "{} modality names for {} channels",
                modality_names.len(),
                m
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(SegQcError::InvalidConfig(format!("spacing must be positive, got {spacing:?}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SegQcError::Data("volume contains non-finite values".into()));
        }
        Ok(Self { data, spacing, modality_names })
    }

    /// Single-modality volume with unit spacing.
    pub fn single(data: ndarray::Array3<f32>) -> Result<Self> {
        let (d, h, w) = data.dim();
        let data = data.into_shape_with_order((1, d, h, w)).expect("exact reshape");
        Self::new(data, [1.0; 3], vec!["M1".into()])
    }

    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn num_modalities(&self) -> usize {
        self.data.shape()[0]
    }

    /// Spatial dimensions `(D, H, W)`.
    pub fn spatial_shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[1], s[2], s[3]]
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn modality_names(&self) -> &[String] {
        &self.modality_names
    }

    pub fn into_data(self) -> Array4<f32> {
        self.data
    }
}
