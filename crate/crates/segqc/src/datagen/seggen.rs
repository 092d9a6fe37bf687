//! Quality-diverse segmentation degradation.
//!
//! Each of four transforms (rotation, scaling, translation, elastic
//! deformation) is independently applied with a fixed probability, parameters
//! drawn uniformly from configured intervals, and the composition is applied
//! as one nearest-neighbor resampling of the label volume. The image is left
//! untouched: only the mask degrades.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::datagen::transform::{resample_labels, DisplacementField, GeoTransform};
use crate::error::{Result, SegQcError};
use crate::mask::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegGenParams {
    pub rotation_deg: Interval,
    pub scale: Interval,
    pub translation_vox: Interval,
    pub deform_displacement_vox: Interval,
    pub per_transform_probability: f64,
    pub applications_per_gt: usize,
    /// Control-point grid of the elastic deformation field.
    pub deform_grid: [usize; 3],
}

impl Default for SegGenParams {
    fn default() -> Self {
        Self {
            rotation_deg: Interval::new(-15.0, 15.0),
            scale: Interval::new(0.85, 1.25),
            translation_vox: Interval::new(-20.0, 20.0),
            deform_displacement_vox: Interval::new(-20.0, 20.0),
            per_transform_probability: 0.5,
            applications_per_gt: 3,
            deform_grid: [4, 4, 4],
        }
    }
}

impl SegGenParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.per_transform_probability) {
            return Err(SegQcError::InvalidConfig("probability must be in [0, 1]".into()));
        }
        for (name, iv) in [
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("translation_vox", self.translation_vox),
            ("deform_displacement_vox", self.deform_displacement_vox),
        ] {
            if iv.lo > iv.hi || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(SegQcError::InvalidConfig(format!("interval {name} is not ordered")));
            }
        }
        if self.scale.lo <= 0.0 {
            return Err(SegQcError::InvalidConfig("scale must stay positive".into()));
        }
        if self.deform_grid.iter().any(|&g| g < 2) {
            return Err(SegQcError::InvalidConfig("deform grid needs ≥ 2 points per axis".into()));
        }
        Ok(())
    }

    /// Scales transform magnitudes: rotation/translation/deformation
    /// intervals shrink or grow about 0, the scale interval about 1.
    pub fn with_severity(&self, severity: f64) -> Self {
        let scale_iv = |iv: Interval| Interval::new(iv.lo * severity, iv.hi * severity);
        Self {
            rotation_deg: scale_iv(self.rotation_deg),
            scale: Interval::new(
                1.0 + (self.scale.lo - 1.0) * severity,
                1.0 + (self.scale.hi - 1.0) * severity,
            ),
            translation_vox: scale_iv(self.translation_vox),
            deform_displacement_vox: scale_iv(self.deform_displacement_vox),
            ..self.clone()
        }
    }
}

/// Degrades a ground-truth mask; deterministic in `(params, seed)`.
pub fn seggen_degrade(gt: &LabelMask, params: &SegGenParams, seed: u64) -> Result<LabelMask> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = params.per_transform_probability;

    let use_rotation = rng.random_bool(p);
    let use_scaling = rng.random_bool(p);
    let use_translation = rng.random_bool(p);
    let use_deformation = rng.random_bool(p);

    let angles = if use_rotation {
        [
            params.rotation_deg.sample(&mut rng),
            params.rotation_deg.sample(&mut rng),
            params.rotation_deg.sample(&mut rng),
        ]
    } else {
        [0.0; 3]
    };
    let scale = if use_scaling { params.scale.sample(&mut rng) } else { 1.0 };
    let translation = if use_translation {
        [
            params.translation_vox.sample(&mut rng),
            params.translation_vox.sample(&mut rng),
            params.translation_vox.sample(&mut rng),
        ]
    } else {
        [0.0; 3]
    };
    let field = if use_deformation {
        let [gd, gh, gw] = params.deform_grid;
        let grid = Array4::from_shape_simple_fn((gd, gh, gw, 3), || {
            params.deform_displacement_vox.sample(&mut rng)
        });
        Some(DisplacementField { grid })
    } else {
        None
    };

    let mut t = GeoTransform::from_rotation_scale(angles, scale);
    t.translation = translation;
    t.field = field;
    Ok(resample_labels(gt, &t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::phantom::{generate_phantom, PhantomSpec};
    use crate::hierarchy::ClassHierarchy;
    use crate::mask::one_hot;
    use crate::metrics::multiclass_dsc;
    use ndarray::Array3;

    #[test]
    fn probability_zero_is_identity() {
        let (_, gt) = generate_phantom(&PhantomSpec::default_brain(20), 1).unwrap();
        let params =
            SegGenParams { per_transform_probability: 0.0, ..Default::default() };
        let out = seggen_degrade(&gt, &params, 123).unwrap();
        assert_eq!(out.data(), gt.data());
        assert_eq!(multiclass_dsc(&out, &gt).unwrap(), 1.0);
    }

    #[test]
    fn pure_translation_moves_single_voxel() {
        let h = ClassHierarchy::brats();
        let mut a = Array3::<u8>::zeros((16, 16, 16));
        a[[6, 8, 8]] = 4;
        let gt = LabelMask::new(a, h).unwrap();
        let params = SegGenParams {
            per_transform_probability: 1.0,
            rotation_deg: Interval::new(0.0, 0.0),
            scale: Interval::new(1.0, 1.0),
            translation_vox: Interval::new(5.0, 5.0),
            deform_displacement_vox: Interval::new(0.0, 0.0),
            ..Default::default()
        };
        let out = seggen_degrade(&gt, &params, 9).unwrap();
        assert_eq!(out.data()[[11, 13, 13]], 4);
        assert_eq!(out.data().iter().filter(|&&v| v != 0).count(), 1);
    }

    #[test]
    fn degradation_is_deterministic_and_label_safe() {
        let (_, gt) = generate_phantom(&PhantomSpec::default_brain(24), 5).unwrap();
        let params = SegGenParams::default();
        let a = seggen_degrade(&gt, &params, 42).unwrap();
        let b = seggen_degrade(&gt, &params, 42).unwrap();
        assert_eq!(a.data(), b.data());
        // Labels remain declared and the nested structure survives
        // nearest-neighbor resampling of a nested source.
        let h = gt.hierarchy();
        for &v in a.data().iter() {
            assert!(h.is_declared(v));
        }
        assert!(one_hot(&a).satisfies_nesting());
    }

    #[test]
    fn degradations_span_quality_bins() {
        // 200 degradations of one phantom must cover at least 5 of 10 bins.
        let (_, gt) = generate_phantom(&PhantomSpec::default_brain(32), 11).unwrap();
        let params = SegGenParams::default();
        let mut bins = [0usize; 10];
        for seed in 0..200 {
            let deg = seggen_degrade(&gt, &params, seed).unwrap();
            let d = multiclass_dsc(&deg, &gt).unwrap();
            let b = ((d * 10.0).floor() as usize).min(9);
            bins[b] += 1;
        }
        let covered = bins.iter().filter(|&&n| n > 0).count();
        assert!(covered >= 5, "bins covered: {covered} ({bins:?})");
    }
}
