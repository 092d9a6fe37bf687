//! Uncertainty-estimation QC baseline.
//!
//! Monte-Carlo-dropout softmax means are aggregated to per-derived-class
//! probabilities, converted to a voxel uncertainty score, binarized with
//! thresholds calibrated against ground-truth error maps (maximizing the
//! uncertainty-error overlap on a 0.05-step grid), and summarized into a
//! compact per-class feature vector feeding a random-forest regressor for
//! subject-level DSC/NSD.

pub mod forest;

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};
use crate::hierarchy::ClassHierarchy;
use crate::metrics::{boundary, ue_overlap, SemStack};
pub use forest::{fit_forest, ForestConfig, ForestRegressor};

/// How a mean softmax probability becomes a voxel uncertainty score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    /// `1 − |2p − 1|`: distance from a confident 0-or-1 probability.
    #[default]
    DistanceFromConfident,
    /// Threshold the mean probability directly.
    LiteralProbability,
}

/// Number of features extracted per derived class.
pub const FEATURES_PER_CLASS: usize = 10;

/// The calibration grid: 0.05, 0.10, …, 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Aggregates base-label softmax probabilities (background first) to
/// per-derived-class probabilities by summing member labels.
pub fn derived_class_probability(
    softmax: &Array4<f32>,
    hierarchy: &ClassHierarchy,
) -> Result<Array4<f32>> {
    let (l, d, h, w) = softmax.dim();
    if l != hierarchy.num_base_labels() + 1 {
        return Err(SegQcError::ShapeMismatch {
            expected: vec![hierarchy.num_base_labels() + 1],
            got: vec![l],
        });
    }
    let c = hierarchy.num_classes();
    let mut out = Array4::<f32>::zeros((c, d, h, w));
    for (bi, base) in hierarchy.base_labels().iter().enumerate() {
        let bits = hierarchy.membership_bits(base.code);
        let src = softmax.index_axis(Axis(0), bi + 1);
        for ci in 0..c {
            if bits & (1 << ci) != 0 {
                out.index_axis_mut(Axis(0), ci).zip_mut_with(&src, |a, &b| *a += b);
            }
        }
    }
    Ok(out)
}

/// Converts per-class probabilities to uncertainty scores.
pub fn uncertainty_scores(class_prob: &Array4<f32>, mode: UncertaintyMode) -> Array4<f32> {
    match mode {
        UncertaintyMode::DistanceFromConfident => {
            class_prob.mapv(|p| 1.0 - (2.0 * p - 1.0).abs())
        }
        UncertaintyMode::LiteralProbability => class_prob.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub mode: UncertaintyMode,
    pub dataset_id: String,
    /// Per-class optimal threshold on the 0.05 grid.
    pub thresholds: Vec<f64>,
    /// Mean uncertainty-error overlap achieved at that threshold.
    pub mean_ue_overlap: Vec<f64>,
}

/// Per class, picks the grid threshold maximizing the mean overlap between
/// the binarized score map and the true error map; ties take the smallest
/// threshold.
pub fn calibrate_thresholds(
    score_stacks: &[Array4<f32>],
    sem_gts: &[&SemStack],
    mode: UncertaintyMode,
    dataset_id: &str,
) -> Result<ThresholdCalibration> {
    if score_stacks.is_empty() || score_stacks.len() != sem_gts.len() {
        return Err(SegQcError::InvalidConfig(format!(
            "{} score stacks for {} error maps",
            score_stacks.len(),
            sem_gts.len()
        )));
    }
    let c = sem_gts[0].num_classes();
    let grid = threshold_grid();
    let mut thresholds = Vec::with_capacity(c);
    let mut best_overlaps = Vec::with_capacity(c);
    for ci in 0..c {
        let mut best_thr = grid[0];
        let mut best = f64::NEG_INFINITY;
        for &thr in &grid {
            let mut acc = 0.0;
            for (scores, gt) in score_stacks.iter().zip(sem_gts.iter()) {
                let bin = scores.index_axis(Axis(0), ci).mapv(|s| s as f64 >= thr);
                acc += ue_overlap(bin.view(), gt.data().index_axis(Axis(0), ci))?;
            }
            let mean = acc / score_stacks.len() as f64;
            if mean > best {
                best = mean;
                best_thr = thr;
            }
        }
        thresholds.push(best_thr);
        best_overlaps.push(best);
    }
    Ok(ThresholdCalibration {
        mode,
        dataset_id: dataset_id.to_string(),
        thresholds,
        mean_ue_overlap: best_overlaps,
    })
}

/// Binarizes uncertainty scores with the calibrated per-class thresholds.
pub fn umap_to_sem(
    scores: &Array4<f32>,
    calibration: &ThresholdCalibration,
    hierarchy: &ClassHierarchy,
) -> Result<SemStack> {
    let c = scores.dim().0;
    if calibration.thresholds.len() != c {
        return Err(SegQcError::ShapeMismatch {
            expected: vec![calibration.thresholds.len()],
            got: vec![c],
        });
    }
    let (_, d, h, w) = scores.dim();
    let mut out = ndarray::Array4::<bool>::from_elem((c, d, h, w), false);
    for ci in 0..c {
        let thr = calibration.thresholds[ci];
        let src = scores.index_axis(Axis(0), ci);
        out.index_axis_mut(Axis(0), ci).zip_mut_with(&src, |o, &s| *o = s as f64 >= thr);
    }
    SemStack::new(out, hierarchy.clone())
}

/// Compact per-class summary of an uncertainty score stack:
/// volume fraction above threshold, mean, std, min, max, the 10/50/90th
/// percentiles, entropy of the binarized fraction, and the boundary-voxel
/// count of the binarized map. `FEATURES_PER_CLASS` values per class.
pub fn umap_features(scores: &Array4<f32>, thresholds: &[f64]) -> Vec<f64> {
    let (c, _, _, _) = scores.dim();
    let mut out = Vec::with_capacity(c * FEATURES_PER_CLASS);
    for ci in 0..c {
        let plane = scores.index_axis(Axis(0), ci);
        let mut vals: Vec<f64> = plane.iter().map(|&v| v as f64).collect();
        let n = vals.len() as f64;
        let thr = thresholds.get(ci).copied().unwrap_or(0.5);
        let above = vals.iter().filter(|&&v| v >= thr).count() as f64;
        let frac = above / n;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let pct = |q: f64| -> f64 { vals[((q * (vals.len() - 1) as f64).round() as usize).min(vals.len() - 1)] };
        let entropy = if frac > 0.0 && frac < 1.0 {
            -(frac * frac.ln() + (1.0 - frac) * (1.0 - frac).ln())
        } else {
            0.0
        };
        let bin = plane.mapv(|v| v as f64 >= thr);
        let boundary_count = boundary(bin.view()).iter().filter(|&&b| b).count() as f64;
        out.extend_from_slice(&[
            frac,
            mean,
            std,
            vals[0],
            vals[vals.len() - 1],
            pct(0.10),
            pct(0.50),
            pct(0.90),
            entropy,
            boundary_count,
        ]);
    }
    out
}

/// Subject-level regressor of (DSC, NSD) from uncertainty features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UeRegressor {
    pub forest_dsc: ForestRegressor,
    pub forest_nsd: ForestRegressor,
    /// True when a target was constant and a constant predictor was used.
    pub degenerate: bool,
}

impl UeRegressor {
    pub fn predict(&self, features: &[f64]) -> (f64, f64) {
        (
            self.forest_dsc.predict(features).clamp(0.0, 1.0),
            self.forest_nsd.predict(features).clamp(0.0, 1.0),
        )
    }
}

/// Fits the two score forests on feature rows; needs at least 10 pairs.
pub fn fit_ue_regressor(
    features: &[Vec<f64>],
    gt_scores: &[(f64, f64)],
    config: &ForestConfig,
    seed: u64,
) -> Result<UeRegressor> {
    if features.len() < 10 {
        return Err(SegQcError::InvalidConfig(format!(
            "need at least 10 training pairs, got {}",
            features.len()
        )));
    }
    if features.len() != gt_scores.len() {
        return Err(SegQcError::InvalidConfig("feature/target length mismatch".into()));
    }
    let dsc: Vec<f64> = gt_scores.iter().map(|s| s.0).collect();
    let nsd: Vec<f64> = gt_scores.iter().map(|s| s.1).collect();
    let forest_dsc = fit_forest(features, &dsc, config, seed)?;
    let forest_nsd = fit_forest(features, &nsd, config, seed ^ 0xABCD_EF01)?;
    let degenerate = forest_dsc.is_constant() || forest_nsd.is_constant();
    Ok(UeRegressor { forest_dsc, forest_nsd, degenerate })
}
