//! Overlap metrics: multi-class DSC, per-class error-map DSC, UE overlap.

use ndarray::{ArrayView3, Axis};

use crate::error::{Result, SegQcError};
use crate::hierarchy::BACKGROUND;
use crate::mask::LabelMask;
use crate::metrics::sem::SemStack;

/// Subject-level multi-class Dice with micro-aggregated counts.
///
/// A voxel with the correct foreground label is one true positive; a
/// foreground prediction that disagrees with the reference is one false
/// positive, and any disagreement where the reference is foreground is one
/// false negative (so a wrong-foreground-class voxel costs one FP plus one
/// FN). Two all-background masks score 1.
pub fn multiclass_dsc(query: &LabelMask, gt: &LabelMask) -> Result<f64> {
    query.same_geometry(gt)?;
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for (&q, &g) in query.data().iter().zip(gt.data().iter()) {
        if q == g {
            if g != BACKGROUND {
                tp += 1;
            }
        } else {
            if q != BACKGROUND {
                fp += 1;
            }
            if g != BACKGROUND {
                fnn += 1;
            }
        }
    }
    if tp + fp + fnn == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fnn as f64))
}

/// Binary Dice between two voxel sets; both empty scores 1.
pub fn binary_dice(a: ArrayView3<'_, bool>, b: ArrayView3<'_, bool>) -> f64 {
    let mut inter = 0u64;
    let mut na = 0u64;
    let mut nb = 0u64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        na += x as u64;
        nb += y as u64;
        inter += (x && y) as u64;
    }
    if na + nb == 0 {
        return 1.0;
    }
    2.0 * inter as f64 / (na + nb) as f64
}

/// Per-class Dice between predicted and ground-truth error maps, plus mean.
pub fn dsc_sem(pred: &SemStack, gt: &SemStack) -> Result<(Vec<f64>, f64)> {
    if pred.data().shape() != gt.data().shape() {
        return Err(SegQcError::ShapeMismatch {
            expected: gt.data().shape().to_vec(),
            got: pred.data().shape().to_vec(),
        });
    }
    let per: Vec<f64> = (0..pred.num_classes())
        .map(|c| {
            binary_dice(pred.data().index_axis(Axis(0), c), gt.data().index_axis(Axis(0), c))
        })
        .collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

/// Dice-style overlap between a binarized uncertainty map and a true error map.
pub fn ue_overlap(umap_bin: ArrayView3<'_, bool>, sem_gt: ArrayView3<'_, bool>) -> Result<f64> {
    if umap_bin.shape() != sem_gt.shape() {
        return Err(SegQcError::ShapeMismatch {
            expected: sem_gt.shape().to_vec(),
            got: umap_bin.shape().to_vec(),
        });
    }
    Ok(binary_dice(umap_bin, sem_gt))
}
