//! Synthetic phantoms: nested ellipsoid lesions with class-dependent
//! intensities, standing in for clinical volumes at desk scale.

use ndarray::{Array3, Array4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};
use crate::hierarchy::ClassHierarchy;
use crate::mask::LabelMask;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRange {
    pub lo: f64,
    pub hi: f64,
}

/// Per-(region, modality) intensity statistics. Regions are the rings of the
/// nested lesion, ordered like the derived classes (outermost ring first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid_shape: [usize; 3],
    pub modalities: usize,
    /// Lesions per phantom (later lesions overwrite earlier ones on overlap).
    pub lesion_count: usize,
    /// Per derived class (outermost first), the per-axis radius range.
    /// Ranges must be strictly descending: `class_radii[c+1].hi < class_radii[c].lo`.
    pub class_radii: Vec<RadiusRange>,
    /// `[region][modality]` intensity statistics; region count = class count.
    pub region_intensity: Vec<Vec<IntensityModel>>,
    pub background_noise_std: f64,
    pub hierarchy: ClassHierarchy,
}

impl PhantomSpec {
    /// Small isotropic brain-like preset on the nested 3-class hierarchy.
    pub fn default_brain(grid: usize) -> Self {
        let h = ClassHierarchy::brats();
        let third = grid as f64 / 3.0;
        Self {
            grid_shape: [grid; 3],
            modalities: 1,
            lesion_count: 1,
            class_radii: vec![
                RadiusRange { lo: third * 0.80, hi: third * 1.05 },
                RadiusRange { lo: third * 0.45, hi: third * 0.70 },
                RadiusRange { lo: third * 0.15, hi: third * 0.38 },
            ],
            region_intensity: vec![
                vec![IntensityModel { mean: 0.35, std: 0.05 }],
                vec![IntensityModel { mean: 0.65, std: 0.05 }],
                vec![IntensityModel { mean: 1.00, std: 0.05 }],
            ],
            background_noise_std: 0.05,
            hierarchy: h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.hierarchy.num_classes();
        if self.class_radii.len() != c {
            return Err(SegQcError::InvalidConfig(format!(
                "{} radius ranges for {} classes",
                self.class_radii.len(),
                c
            )));
        }
        if self.region_intensity.len() != c
            || self.region_intensity.iter().any(|m| m.len() != self.modalities)
        {
            return Err(SegQcError::InvalidConfig(
                "region_intensity must be classes × modalities".into(),
            ));
        }
        if self.modalities == 0 || self.lesion_count == 0 {
            return Err(SegQcError::InvalidConfig("need ≥ 1 modality and ≥ 1 lesion".into()));
        }
        for r in &self.class_radii {
            if !(r.lo > 0.0 && r.hi >= r.lo) {
                return Err(SegQcError::InvalidConfig(format!("bad radius range {r:?}")));
            }
        }
        for w in self.class_radii.windows(2) {
            if w[1].hi >= w[0].lo {
                return Err(SegQcError::InvalidConfig(format!(
                    "radius ranges cannot nest: inner {:?} overlaps outer {:?}",
                    w[1], w[0]
                )));
            }
        }
        let r_max = self.class_radii[0].hi;
        if self.grid_shape.iter().any(|&d| (d as f64) < 2.0 * r_max + 2.0) {
            return Err(SegQcError::InvalidConfig(format!(
                "grid {:?} too small for outer radius {r_max}",
                self.grid_shape
            )));
        }
        if self.background_noise_std < 0.0 {
            return Err(SegQcError::InvalidConfig("negative noise std".into()));
        }
        Ok(())
    }
}

/// Deterministically generates one phantom image + ground-truth mask.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<(Volume, LabelMask)> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let [d, h, w] = spec.grid_shape;
    let c = spec.hierarchy.num_classes();

    let mut labels = Array3::<u8>::zeros((d, h, w));
    for _ in 0..spec.lesion_count {
        // Per-axis radii per class, then a center that keeps the lesion inside.
        let radii: Vec<[f64; 3]> = spec
            .class_radii
            .iter()
            .map(|r| {
                [
                    rng.random_range(r.lo..=r.hi),
                    rng.random_range(r.lo..=r.hi),
                    rng.random_range(r.lo..=r.hi),
                ]
            })
            .collect();
        let outer = radii[0];
        let mut center = [0.0f64; 3];
        for a in 0..3 {
            let lo = outer[a] + 1.0;
            let hi = spec.grid_shape[a] as f64 - outer[a] - 2.0;
            center[a] = if hi > lo { rng.random_range(lo..=hi) } else { spec.grid_shape[a] as f64 / 2.0 };
        }
        // Paint rings outermost-first; inner classes overwrite.
        for (z, y, x) in itertools_3d(d, h, w) {
            let p = [z as f64, y as f64, x as f64];
            for ci in 0..c {
                let r = &radii[ci];
                let q = (0..3)
                    .map(|a| {
                        let t = (p[a] - center[a]) / r[a];
                        t * t
                    })
                    .sum::<f64>();
                if q <= 1.0 {
                    labels[[z, y, x]] = spec.hierarchy.recompose_label(ci);
                }
            }
        }
    }

    // Image: per-region intensity + Gaussian noise per modality.
    let mut image = Array4::<f32>::zeros((spec.modalities, d, h, w));
    // Ring region of a voxel = innermost class containing its label.
    let region_of = |code: u8| -> Option<usize> {
        if code == 0 {
            return None;
        }
        let bits = spec.hierarchy.membership_bits(code);
        (0..c).rev().find(|&ci| bits & (1 << ci) != 0)
    };
    for m in 0..spec.modalities {
        for (z, y, x) in itertools_3d(d, h, w) {
            let (mean, std) = match region_of(labels[[z, y, x]]) {
                Some(ci) => {
                    let im = &spec.region_intensity[ci][m];
                    (im.mean, im.std)
                }
                None => (0.0, spec.background_noise_std),
            };
            let v = if std > 0.0 {
                Normal::new(mean, std).expect("valid std").sample(&mut rng)
            } else {
                mean
            };
            image[[m, z, y, x]] = v as f32;
        }
    }

    let volume = Volume::new(
        image,
        [1.0; 3],
        (0..spec.modalities).map(|i| format!("M{}", i + 1)).collect(),
    )?;
    let mask = LabelMask::new(labels, spec.hierarchy.clone())?;
    Ok((volume, mask))
}

fn itertools_3d(d: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..d).flat_map(move |z| (0..h).flat_map(move |y| (0..w).map(move |x| (z, y, x))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::one_hot;

    #[test]
    fn zero_noise_gives_exact_class_means() {
        let mut spec = PhantomSpec::default_brain(24);
        spec.background_noise_std = 0.0;
        for row in spec.region_intensity.iter_mut() {
            for im in row.iter_mut() {
                im.std = 0.0;
            }
        }
        let (vol, mask) = generate_phantom(&spec, 3).unwrap();
        for ((_, z, y, x), &v) in vol.data().indexed_iter() {
            let code = mask.data()[[z, y, x]];
            let want = match code {
                0 => 0.0,
                2 => 0.35, // outer ring (ED)
                1 => 0.65, // middle ring (NCR)
                4 => 1.00, // core (ET)
                other => panic!("unexpected label {other}"),
            };
            assert_eq!(v, want as f32, "at {z},{y},{x}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = PhantomSpec::default_brain(20);
        let (v1, m1) = generate_phantom(&spec, 77).unwrap();
        let (v2, m2) = generate_phantom(&spec, 77).unwrap();
        assert_eq!(v1.data(), v2.data());
        assert_eq!(m1.data(), m2.data());
        let (v3, _) = generate_phantom(&spec, 78).unwrap();
        assert_ne!(v1.data(), v3.data());
    }

    #[test]
    fn hundred_seeds_all_satisfy_nesting() {
        let spec = PhantomSpec::default_brain(20);
        for seed in 0..100 {
            let (_, mask) = generate_phantom(&spec, seed).unwrap();
            let stack = one_hot(&mask);
            assert!(stack.satisfies_nesting(), "seed {seed}");
            // Every class materially present.
            for c in 0..3 {
                let n = stack
                    .data()
                    .index_axis(ndarray::Axis(0), c)
                    .iter()
                    .filter(|&&b| b)
                    .count();
                assert!(n > 0, "seed {seed}: class {c} empty");
            }
        }
    }

    #[test]
    fn non_nestable_ranges_rejected() {
        let mut spec = PhantomSpec::default_brain(24);
        spec.class_radii[1].hi = spec.class_radii[0].lo + 1.0;
        assert!(matches!(generate_phantom(&spec, 1), Err(SegQcError::InvalidConfig(_))));
    }
}
