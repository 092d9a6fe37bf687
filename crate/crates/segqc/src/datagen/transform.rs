//! Geometric transforms applied by resampling.
//!
//! A [`GeoTransform`] maps every output voxel to a source coordinate in one
//! composed step (no repeated interpolation): with rotation matrix R, scale
//! s, translation t, volume center c and pull-displacement field u,
//!
//! ```text
//! src(v) = (R·diag(s))⁻¹ · (v − c − t) + c + u(v)
//! ```
//!
//! so content rotates by R, scales by s, moves by +t, and is then deformed
//! by u (sampled at the output voxel, the usual augmentation convention).
//! Labels are resampled nearest-neighbor, images trilinearly; out-of-bounds
//! samples become background / zero.

use ndarray::{Array3, Array4};

use crate::error::Result;
use crate::mask::LabelMask;
use crate::volume::Volume;

/// Dense or control-grid displacement field, components in voxels.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    /// Control grid of shape (gd, gh, gw), 3 components per point.
    pub grid: Array4<f64>,
}

impl DisplacementField {
    /// Trilinearly interpolates the control grid at voxel position `p`
    /// within a volume of shape `shape`.
    pub fn sample(&self, p: [f64; 3], shape: [usize; 3]) -> [f64; 3] {
        let g = self.grid.shape();
        let mut out = [0.0; 3];
        let mut coords = [0.0; 3];
        for a in 0..3 {
            let extent = (shape[a] - 1).max(1) as f64;
            let gc = (g[a] - 1).max(1) as f64;
            coords[a] = (p[a] / extent).clamp(0.0, 1.0) * gc;
        }
        let base: Vec<usize> = coords.iter().map(|&c| c.floor() as usize).collect();
        let frac: Vec<f64> = coords.iter().zip(&base).map(|(&c, &b)| c - b as f64).collect();
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let iz = (base[0] + dz).min(g[0] - 1);
                    let iy = (base[1] + dy).min(g[1] - 1);
                    let ix = (base[2] + dx).min(g[2] - 1);
                    let wz = if dz == 1 { frac[0] } else { 1.0 - frac[0] };
                    let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
                    let wx = if dx == 1 { frac[2] } else { 1.0 - frac[2] };
                    let w = wz * wy * wx;
                    for c in 0..3 {
                        out[c] += w * self.grid[[iz, iy, ix, c]];
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GeoTransform {
    /// Inverse linear part, i.e. (R·diag(s))⁻¹, applied to centered coords.
    pub inv_linear: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub field: Option<DisplacementField>,
}

impl GeoTransform {
    pub fn identity() -> Self {
        Self {
            inv_linear: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            field: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.translation == [0.0; 3]
            && self.field.is_none()
            && self.inv_linear == GeoTransform::identity().inv_linear
    }

    /// Builds the inverse linear part from Euler angles (degrees, rotations
    /// about the D, H, W axes applied in that order) and an isotropic scale.
    pub fn from_rotation_scale(angles_deg: [f64; 3], scale: f64) -> Self {
        let r = euler_rotation(angles_deg);
        // (R·sI)⁻¹ = (1/s)·Rᵀ
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = r[j][i] / scale;
            }
        }
        Self { inv_linear: inv, translation: [0.0; 3], field: None }
    }

    /// Source coordinate for output voxel `v` in a volume of shape `shape`.
    pub fn source(&self, v: [f64; 3], shape: [usize; 3]) -> [f64; 3] {
        let c = [
            (shape[0] as f64 - 1.0) / 2.0,
            (shape[1] as f64 - 1.0) / 2.0,
            (shape[2] as f64 - 1.0) / 2.0,
        ];
        let centered = [
            v[0] - c[0] - self.translation[0],
            v[1] - c[1] - self.translation[1],
            v[2] - c[2] - self.translation[2],
        ];
        let mut src = [0.0; 3];
        for i in 0..3 {
            src[i] = self.inv_linear[i][0] * centered[0]
                + self.inv_linear[i][1] * centered[1]
                + self.inv_linear[i][2] * centered[2]
                + c[i];
        }
        if let Some(f) = &self.field {
            let u = f.sample(v, shape);
            for i in 0..3 {
                src[i] += u[i];
            }
        }
        src
    }
}

/// Rotation matrix from Euler angles in degrees: R = R_w · R_h · R_d.
fn euler_rotation(angles_deg: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, g] = angles_deg.map(|d| d.to_radians());
    let (ca, sa) = (a.cos(), a.sin());
    let (cb, sb) = (b.cos(), b.sin());
    let (cg, sg) = (g.cos(), g.sin());
    // Rotation about axis 0 (D): mixes (H, W); about axis 1 (H): mixes (D, W);
    // about axis 2 (W): mixes (D, H).
    let rd = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let rh = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rw = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rw, &mat_mul(&rh, &rd))
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Nearest-neighbor label resampling; out-of-bounds becomes background.
pub fn resample_labels(mask: &LabelMask, t: &GeoTransform) -> LabelMask {
    if t.is_identity() {
        return mask.clone();
    }
    let [d, h, w] = mask.shape();
    let src_data = mask.data();
    let out = Array3::from_shape_fn((d, h, w), |(z, y, x)| {
        let s = t.source([z as f64, y as f64, x as f64], [d, h, w]);
        let iz = s[0].round();
        let iy = s[1].round();
        let ix = s[2].round();
        if iz < 0.0
            || iy < 0.0
            || ix < 0.0
            || iz as usize >= d
            || iy as usize >= h
            || ix as usize >= w
        {
            0
        } else {
            src_data[[iz as usize, iy as usize, ix as usize]]
        }
    });
    LabelMask::new_unchecked(out, mask.hierarchy().clone())
}

/// Trilinear image resampling; out-of-bounds contributes zero.
pub fn resample_image(volume: &Volume, t: &GeoTransform) -> Result<Volume> {
    if t.is_identity() {
        return Ok(volume.clone());
    }
    let [d, h, w] = volume.spatial_shape();
    let m = volume.num_modalities();
    let data = volume.data();
    let out = Array4::from_shape_fn((m, d, h, w), |(ch, z, y, x)| {
        let s = t.source([z as f64, y as f64, x as f64], [d, h, w]);
        trilinear_at(data, ch, s, [d, h, w])
    });
    Volume::new(out, volume.spacing(), volume.modality_names().to_vec())
}

fn trilinear_at(data: &Array4<f32>, ch: usize, p: [f64; 3], shape: [usize; 3]) -> f32 {
    let base = [p[0].floor(), p[1].floor(), p[2].floor()];
    let frac = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
    let mut acc = 0.0f64;
    for dz in 0..2i64 {
        for dy in 0..2i64 {
            for dx in 0..2i64 {
                let iz = base[0] as i64 + dz;
                let iy = base[1] as i64 + dy;
                let ix = base[2] as i64 + dx;
                if iz < 0
                    || iy < 0
                    || ix < 0
                    || iz >= shape[0] as i64
                    || iy >= shape[1] as i64
                    || ix >= shape[2] as i64
                {
                    continue;
                }
                let wz = if dz == 1 { frac[0] } else { 1.0 - frac[0] };
                let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
                let wx = if dx == 1 { frac[2] } else { 1.0 - frac[2] };
                acc += wz * wy * wx * data[[ch, iz as usize, iy as usize, ix as usize]] as f64;
            }
        }
    }
    acc as f32
}
