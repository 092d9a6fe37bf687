//! Cross-fold ensembling: score averaging and per-voxel majority voting.

use ndarray::Array4;

use crate::error::{Result, SegQcError};
use crate::mask::LabelMask;
use crate::metrics::SemStack;
use crate::model::QcResUNet;
use crate::volume::Volume;

/// Threshold for binarizing per-model error probabilities before voting.
pub const SEM_BINARIZE_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone)]
pub struct EnsemblePrediction {
    pub dsc_pred: f64,
    pub nsd_pred: f64,
    /// Majority-voted binary error map (ties resolve to positive).
    pub sem: SemStack,
    /// Mean of the member probability maps.
    pub mean_sem_prob: Array4<f32>,
}

/// Averages DSC/NSD over members and majority-votes the binarized error
/// maps; an even split counts as positive so possible errors stay flagged.
pub fn ensemble_predict(
    models: &[&QcResUNet],
    volume: &Volume,
    query: &LabelMask,
) -> Result<EnsemblePrediction> {
    if models.is_empty() {
        return Err(SegQcError::InvalidConfig("ensemble needs at least one model".into()));
    }
    for m in &models[1..] {
        if m.config() != models[0].config() {
            return Err(SegQcError::CheckpointMismatch(
                "ensemble members have different configurations".into(),
            ));
        }
    }
    let n = models.len();
    let mut dsc = 0.0;
    let mut nsd = 0.0;
    let mut votes: Option<Array4<u32>> = None;
    let mut prob_sum: Option<Array4<f32>> = None;
    for model in models {
        let pred = model.predict(volume, query)?;
        dsc += pred.dsc_pred;
        nsd += pred.nsd_pred;
        let bin = pred.sem_prob.mapv(|p| (p >= SEM_BINARIZE_THRESHOLD) as u32);
        votes = Some(match votes {
            None => bin,
            Some(mut v) => {
                v.zip_mut_with(&bin, |a, &b| *a += b);
                v
            }
        });
        prob_sum = Some(match prob_sum {
            None => pred.sem_prob,
            Some(mut s) => {
                s.zip_mut_with(&pred.sem_prob, |a, &b| *a += b);
                s
            }
        });
    }
    let votes = votes.expect("n >= 1");
    let mut mean_sem_prob = prob_sum.expect("n >= 1");
    mean_sem_prob.mapv_inplace(|v| v / n as f32);
    // Majority with positive ties: flagged iff 2·votes >= n.
    let sem_data = votes.mapv(|v| 2 * v as usize >= n);
    let sem = SemStack::new(sem_data, query.hierarchy().clone())?;
    Ok(EnsemblePrediction { dsc_pred: dsc / n as f64, nsd_pred: nsd / n as f64, sem, mean_sem_prob })
}
