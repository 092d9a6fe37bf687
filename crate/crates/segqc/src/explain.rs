//! Gradient-weighted class activation maps over the encoder.
//!
//! Channel weights are the spatial means of the target score's gradient at
//! the chosen feature layer; the map is the rectified weighted activation
//! sum, min-max normalized and trilinearly upsampled to input resolution.

use ndarray::{Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::LabelMask;
use crate::model::QcResUNet;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CamTarget {
    Dsc,
    Nsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CamLayer {
    /// Final encoder-stage features (the default attribution layer).
    #[default]
    Block4,
    /// Third-stage features (the decoder input), for layer comparisons.
    Block3,
}

#[derive(Debug, Clone)]
pub struct CamResult {
    /// Heatmap at input resolution, values in [0, 1].
    pub heatmap: Array3<f32>,
    /// True when the target gradient vanished everywhere (all-zero map).
    pub zero_gradient: bool,
    pub target: CamTarget,
    pub layer: CamLayer,
}

/// Computes a Grad-CAM heatmap for the predicted DSC or NSD.
pub fn grad_cam(
    model: &QcResUNet,
    volume: &Volume,
    query: &LabelMask,
    target: CamTarget,
    layer: CamLayer,
) -> Result<CamResult> {
    let pass = model.forward_pass(volume, query, None)?;
    let mut seed = ArrayD::<f32>::zeros(IxDyn(&[2]));
    seed[[match target {
        CamTarget::Dsc => 0,
        CamTarget::Nsd => 1,
    }]] = 1.0;
    let grads = pass.tape.backward(vec![(pass.scores, seed)]);
    let node = match layer {
        CamLayer::Block4 => pass.block4,
        CamLayer::Block3 => pass.block3,
    };
    let activations = pass.tape.value(node);
    let shape = activations.shape().to_vec();
    let (c, d, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let grad = grads.node(node).cloned().unwrap_or_else(|| ArrayD::zeros(activations.raw_dim()));

    // Channel weights: spatial mean of the gradient.
    let vox = d * h * w;
    let gs = grad.as_slice().expect("standard layout");
    let acts = activations.as_slice().expect("standard layout");
    let mut cam = vec![0.0f32; vox];
    let mut any_grad = false;
    for ci in 0..c {
        let gslice = &gs[ci * vox..(ci + 1) * vox];
        let weight = gslice.iter().sum::<f32>() / vox as f32;
        if gslice.iter().any(|&g| g != 0.0) {
            any_grad = true;
        }
        let aslice = &acts[ci * vox..(ci + 1) * vox];
        for (dst, &a) in cam.iter_mut().zip(aslice.iter()) {
            *dst += weight * a;
        }
    }
    if !any_grad {
        let [id, ih, iw] = volume.spatial_shape();
        return Ok(CamResult {
            heatmap: Array3::zeros((id, ih, iw)),
            zero_gradient: true,
            target,
            layer,
        });
    }

    // Rectify, then min-max normalize.
    for v in cam.iter_mut() {
        *v = v.max(0.0);
    }
    let lo = cam.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = cam.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if hi > lo {
        for v in cam.iter_mut() {
            *v = (*v - lo) / (hi - lo);
        }
    } else {
        for v in cam.iter_mut() {
            *v = 0.0;
        }
    }
    let coarse = Array3::from_shape_vec((d, h, w), cam).expect("cam shape");
    let [id, ih, iw] = volume.spatial_shape();
    Ok(CamResult {
        heatmap: upsample_trilinear(&coarse, [id, ih, iw]),
        zero_gradient: false,
        target,
        layer,
    })
}

/// Trilinear upsampling with half-voxel alignment.
pub fn upsample_trilinear(src: &Array3<f32>, out_shape: [usize; 3]) -> Array3<f32> {
    let (sd, sh, sw) = src.dim();
    let [od, oh, ow] = out_shape;
    let scale = [sd as f64 / od as f64, sh as f64 / oh as f64, sw as f64 / ow as f64];
    Array3::from_shape_fn((od, oh, ow), |(z, y, x)| {
        let p = [
            ((z as f64 + 0.5) * scale[0] - 0.5).clamp(0.0, (sd - 1) as f64),
            ((y as f64 + 0.5) * scale[1] - 0.5).clamp(0.0, (sh - 1) as f64),
            ((x as f64 + 0.5) * scale[2] - 0.5).clamp(0.0, (sw - 1) as f64),
        ];
        let base = [p[0].floor() as usize, p[1].floor() as usize, p[2].floor() as usize];
        let frac = [p[0] - base[0] as f64, p[1] - base[1] as f64, p[2] - base[2] as f64];
        let mut acc = 0.0f64;
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let iz = (base[0] + dz).min(sd - 1);
                    let iy = (base[1] + dy).min(sh - 1);
                    let ix = (base[2] + dx).min(sw - 1);
                    let wz = if dz == 1 { frac[0] } else { 1.0 - frac[0] };
                    let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
                    let wx = if dx == 1 { frac[2] } else { 1.0 - frac[2] };
                    acc += wz * wy * wx * src[[iz, iy, ix]] as f64;
                }
            }
        }
        acc as f32
    })
}
