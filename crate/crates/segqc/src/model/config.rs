//! Network configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};

/// Configuration of the quality-control network.
///
/// The encoder follows the ResNet-34 stage plan (3, 4, 6, 3 residual blocks)
/// with channel widths doubling per stage from `base_filters`. Per-stage
/// anisotropic downsampling accommodates thin-axis volumes: the brain preset
/// halves every axis at every stage, the cardiac preset leaves the first axis
/// untouched until the last stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcResUNetConfig {
    /// Number of imaging modalities `m`; the network input has
    /// `m + num_classes` channels (modalities + one-hot query mask).
    pub in_modalities: usize,
    /// Derived-class count `C`: one-hot mask channels in, error-map channels out.
    pub num_classes: usize,
    pub base_filters: usize,
    pub stage_block_counts: [usize; 4],
    /// Per-stage, per-axis stride, each in {1, 2}.
    pub downsample_rates: [[usize; 3]; 4],
    pub spatial_dropout_p: f64,
    /// Odd kernel of the channel-attention 1D convolution.
    pub eca_kernel: usize,
    pub leaky_slope: f64,
}

impl QcResUNetConfig {
    /// Isotropic preset: halves all three axes at every stage.
    pub fn brain(in_modalities: usize, num_classes: usize, base_filters: usize) -> Self {
        Self {
            in_modalities,
            num_classes,
            base_filters,
            stage_block_counts: [3, 4, 6, 3],
            downsample_rates: [[2, 2, 2]; 4],
            spatial_dropout_p: 0.3,
            eca_kernel: 3,
            leaky_slope: 0.01,
        }
    }

    /// Thin-first-axis preset: the first axis is downsampled only in the
    /// final stage.
    pub fn cardiac(in_modalities: usize, num_classes: usize, base_filters: usize) -> Self {
        Self {
            downsample_rates: [[1, 2, 2], [1, 2, 2], [1, 2, 2], [2, 2, 2]],
            ..Self::brain(in_modalities, num_classes, base_filters)
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_modalities + self.num_classes
    }

    /// Width of stage `s` (0-based): base_filters · 2^s.
    pub fn stage_width(&self, s: usize) -> usize {
        self.base_filters << s
    }

    /// Per-axis divisor the input shape must satisfy (product of all stage rates).
    pub fn required_divisor(&self) -> [usize; 3] {
        let mut d = [1usize; 3];
        for r in &self.downsample_rates {
            for a in 0..3 {
                d[a] *= r[a];
            }
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_modalities == 0 || self.num_classes == 0 || self.base_filters == 0 {
            return Err(SegQcError::InvalidConfig(
                "modalities, classes, and base filters must be positive".into(),
            ));
        }
        if self.downsample_rates.iter().flatten().any(|&r| r != 1 && r != 2) {
            return Err(SegQcError::InvalidConfig("downsample rates must be 1 or 2".into()));
        }
        if self.eca_kernel % 2 == 0 || self.eca_kernel == 0 {
            return Err(SegQcError::InvalidConfig("eca_kernel must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.spatial_dropout_p) {
            return Err(SegQcError::InvalidConfig("dropout probability must be in [0, 1)".into()));
        }
        if self.stage_block_counts.iter().any(|&n| n == 0) {
            return Err(SegQcError::InvalidConfig("every stage needs at least one block".into()));
        }
        Ok(())
    }

    /// Checks that `shape` survives all four stages with exact halving.
    pub fn validate_shape(&self, shape: [usize; 3]) -> Result<()> {
        let req = self.required_divisor();
        let mut cur = shape;
        for rates in &self.downsample_rates {
            for a in 0..3 {
                if cur[a] % rates[a] != 0 || cur[a] / rates[a] == 0 {
                    return Err(SegQcError::IndivisibleShape {
                        shape: shape.to_vec(),
                        required: req.to_vec(),
                    });
                }
                cur[a] /= rates[a];
            }
        }
        Ok(())
    }
}
