//! Subject-level evaluation statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};

/// Subject-level quality of one segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub dsc: f64,
    pub nsd: f64,
}

impl QualityScores {
    pub fn new(dsc: f64, nsd: f64) -> Result<Self> {
        for (name, v) in [("dsc", dsc), ("nsd", nsd)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(SegQcError::Data(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { dsc, nsd })
    }
}

/// Sample Pearson correlation coefficient.
///
/// Errors when fewer than two pairs are given or either list is constant
/// (zero variance makes the correlation undefined).
pub fn pearson_r(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(SegQcError::ShapeMismatch { expected: vec![gt.len()], got: vec![pred.len()] });
    }
    if pred.len() < 2 {
        return Err(SegQcError::UndefinedCorrelation("need at least two samples".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = gt.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vg = 0.0;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        cov += (p - mp) * (g - mg);
        vp += (p - mp) * (p - mp);
        vg += (g - mg) * (g - mg);
    }
    if vp == 0.0 || vg == 0.0 {
        return Err(SegQcError::UndefinedCorrelation("constant input list".into()));
    }
    Ok(cov / (vp.sqrt() * vg.sqrt()))
}

/// Mean and population standard deviation of the absolute errors.
pub fn mae(pred: &[f64], gt: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(SegQcError::ShapeMismatch { expected: vec![gt.len()], got: vec![pred.len()] });
    }
    if pred.is_empty() {
        return Err(SegQcError::Data("mae of empty list".into()));
    }
    let n = pred.len() as f64;
    let errs: Vec<f64> = pred.iter().zip(gt.iter()).map(|(&p, &g)| (p - g).abs()).collect();
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
