//! Training loop: balanced stochastic batches, joint augmentation with
//! target recomputation, exponential learning-rate decay, best-validation
//! checkpointing.

use ndarray::{ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment_triple, AugmentConfig};
use super::store::CaseStore;
use crate::datagen::{BalancedIndex, BalancedSampler};
use crate::error::{Result, SegQcError};
use crate::losses::{combined_loss, combined_loss_grad, LossConfig};
use crate::mask::one_hot;
use crate::metrics::{multiclass_dsc, nsd, pearson_r, sem_ground_truth};
use crate::model::QcResUNet;
use crate::nn::{Adam, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Multiplicative decay per epoch.
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Accepted for config compatibility; the CPU backend always computes
    /// in single precision.
    pub mixed_precision: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 2.1e-4,
            lr_decay: 0.9,
            lr_floor: 1e-6,
            weight_decay: 1e-4,
            batch_size: 4,
            epochs: 100,
            augment: AugmentConfig::default(),
            seed: 0,
            mixed_precision: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(SegQcError::InvalidConfig("batch size and epochs must be ≥ 1".into()));
        }
        if !(self.lr_floor < self.initial_lr) {
            return Err(SegQcError::InvalidConfig(format!(
                "lr floor {} must be below initial lr {}",
                self.lr_floor, self.initial_lr
            )));
        }
        if !(0.0 < self.lr_decay && self.lr_decay <= 1.0) {
            return Err(SegQcError::InvalidConfig("lr decay must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Learning rate used in epoch `epoch` (0-based):
    /// `max(initial · decay^epoch, floor)`.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        (self.initial_lr * self.lr_decay.powi(epoch as i32)).max(self.lr_floor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_r_dsc: Option<f64>,
    pub val_r_nsd: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    /// Mean of the validation Pearson r for DSC and NSD at the best epoch.
    pub best_val_r: Option<f64>,
}

/// History CSV: `epoch,lr,train_loss,val_r_dsc,val_r_nsd`.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_r_dsc,val_r_nsd\n");
    for row in history {
        let fmt_opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.6}"));
        out.push_str(&format!(
            "{},{:.8},{:.6},{},{}\n",
            row.epoch,
            row.lr,
            row.train_loss,
            fmt_opt(row.val_r_dsc),
            fmt_opt(row.val_r_nsd)
        ));
    }
    out
}

/// Trains `model` in place; on return the model carries the weights of the
/// best-validation epoch (or the final weights when validation never
/// produced a defined correlation).
pub fn train(
    model: &mut QcResUNet,
    store: &CaseStore,
    sampler: &BalancedSampler,
    val_index: Option<&BalancedIndex>,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
) -> Result<TrainOutput> {
    tcfg.validate()?;
    lcfg.validate()?;
    let mut opt = Adam::new(model.params());
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(usize, f64, Vec<ndarray::ArcArray<f32, IxDyn>>)> = None;
    let tolerance = store.manifest.nsd_tolerance;

    for epoch in 0..tcfg.epochs {
        let lr = tcfg.lr_at_epoch(epoch);
        let mut rng = ChaCha20Rng::seed_from_u64(tcfg.seed ^ (epoch as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut ids = sampler.draw(&mut rng);
        use rand::seq::SliceRandom;
        ids.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (step, batch) in ids.chunks(tcfg.batch_size).enumerate() {
            let (loss, grads) = train_step(model, store, batch, tolerance, tcfg, lcfg, &mut rng)?;
            if !loss.is_finite() {
                return Err(SegQcError::Divergence { epoch, step });
            }
            epoch_loss += loss;
            batches += 1;
            opt.step(model.params_mut(), &grads, lr, tcfg.weight_decay);
        }
        let train_loss = epoch_loss / batches.max(1) as f64;

        let (val_r_dsc, val_r_nsd) = match val_index {
            Some(idx) => validate(model, store, idx)?,
            None => (None, None),
        };
        if let (Some(rd), Some(rn)) = (val_r_dsc, val_r_nsd) {
            let score = 0.5 * (rd + rn);
            let better = best.as_ref().map_or(true, |(_, s, _)| score > *s);
            if better {
                best = Some((epoch, score, model.params().tensors().to_vec()));
            }
        }
        history.push(EpochStats { epoch, lr, train_loss, val_r_dsc, val_r_nsd });
    }

    let (best_epoch, best_val_r) = match best {
        Some((epoch, score, tensors)) => {
            for (slot, t) in tensors.into_iter().enumerate() {
                model.params_mut().update(slot, t.to_owned());
            }
            (Some(epoch), Some(score))
        }
        None => (None, None),
    };
    Ok(TrainOutput { history, best_epoch, best_val_r })
}

/// One optimizer step over a batch; returns (batch loss, parameter grads).
fn train_step(
    model: &QcResUNet,
    store: &CaseStore,
    batch: &[String],
    tolerance: f64,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(f64, Vec<ArrayD<f32>>)> {
    let c = model.config().num_classes;
    let mut passes = Vec::with_capacity(batch.len());
    let mut pred_scores = Vec::with_capacity(batch.len());
    let mut gt_scores = Vec::with_capacity(batch.len());
    let mut sem_probs = Vec::with_capacity(batch.len());
    let mut sem_gts = Vec::with_capacity(batch.len());

    for id in batch {
        let (vol, gt, query, _) = store.triple(id)?;
        let (vol_a, gt_a, query_a) = augment_triple(&tcfg.augment, vol, gt, query, rng)?;
        // Targets are recomputed after augmentation: the shared transform
        // changes both masks, so stored metrics would be stale.
        let dsc_t = multiclass_dsc(&query_a, &gt_a)?;
        let nsd_t = nsd(&one_hot(&query_a), &one_hot(&gt_a), tolerance)?;
        let sem_t = sem_ground_truth(&query_a, &gt_a)?;

        let mut drop_rng = ChaCha20Rng::seed_from_u64(rng.random());
        let pass = model.forward_pass(&vol_a, &query_a, Some(&mut drop_rng))?;
        let scores = pass.tape.value(pass.scores);
        pred_scores.push((scores[[0]], scores[[1]]));
        gt_scores.push((dsc_t as f32, nsd_t as f32));
        sem_probs.push(pass.tape.value(pass.sem_prob).view().into_owned());
        let mut sem_gt_f = ArrayD::<f32>::zeros(sem_probs.last().expect("just pushed").raw_dim());
        for (dst, &b) in sem_gt_f
            .as_slice_mut()
            .expect("fresh")
            .iter_mut()
            .zip(sem_t.data().as_slice().expect("contiguous"))
        {
            *dst = b as u8 as f32;
        }
        sem_gts.push(sem_gt_f);
        passes.push(pass);
    }

    // Voxel-level terms pool the whole batch (per-class sums run over every
    // voxel in the batch), matching the batch-wise normalization.
    let prob_views: Vec<_> = sem_probs.iter().map(|a| a.view()).collect();
    let gt_views: Vec<_> = sem_gts.iter().map(|a| a.view()).collect();
    let pooled_probs = ndarray::concatenate(Axis(1), &prob_views)
        .expect("pool probs")
        .as_standard_layout()
        .to_owned();
    let pooled_gts = ndarray::concatenate(Axis(1), &gt_views)
        .expect("pool gts")
        .as_standard_layout()
        .to_owned();

    let loss =
        combined_loss(&pred_scores, &gt_scores, &pooled_probs, &pooled_gts, lcfg)? as f64;
    let (score_grads, sem_grad) =
        combined_loss_grad(&pred_scores, &gt_scores, &pooled_probs, &pooled_gts, lcfg);

    let mut total: Vec<ArrayD<f32>> =
        model.params().tensors().iter().map(|t| ArrayD::zeros(t.raw_dim())).collect();
    let depth_per_sample = sem_probs[0].shape()[1];
    for (i, pass) in passes.iter().enumerate() {
        let sg = ArrayD::from_shape_vec(
            IxDyn(&[2]),
            vec![score_grads[i].0, score_grads[i].1],
        )
        .expect("score grad");
        let sem_slice = sem_grad
            .slice_axis(
                Axis(1),
                ndarray::Slice::from(i * depth_per_sample..(i + 1) * depth_per_sample),
            )
            .as_standard_layout()
            .to_owned();
        debug_assert_eq!(sem_slice.shape()[0], c);
        let grads = pass.tape.backward(vec![(pass.scores, sg), (pass.sem_prob, sem_slice)]);
        let pg = pass.tape.param_grads(&grads, model.params());
        for (acc, g) in total.iter_mut().zip(pg.into_iter()) {
            acc.zip_mut_with(&g, |a, &b| *a += b);
        }
    }
    Ok((loss, total))
}

/// Validation Pearson r for DSC and NSD over a deterministic index.
/// `None` when the correlation is undefined (constant predictions).
pub fn validate(
    model: &QcResUNet,
    store: &CaseStore,
    index: &BalancedIndex,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut pred_d = Vec::new();
    let mut gt_d = Vec::new();
    let mut pred_n = Vec::new();
    let mut gt_n = Vec::new();
    for id in index.all_ids() {
        let (vol, _, query, rec) = store.triple(&id)?;
        let pred = model.predict(vol, query)?;
        pred_d.push(pred.dsc_pred);
        gt_d.push(rec.dsc);
        pred_n.push(pred.nsd_pred);
        gt_n.push(rec.nsd);
    }
    let r_d = pearson_r(&pred_d, &gt_d).ok();
    let r_n = pearson_r(&pred_n, &gt_n).ok();
    Ok((r_d, r_n))
}

/// Restores `model` to a parameter snapshot (used for best-epoch rollback).
pub fn restore_params(params: &mut ParamSet<f32>, snapshot: &[ndarray::ArcArray<f32, IxDyn>]) {
    for (slot, t) in snapshot.iter().enumerate() {
        params.update(slot, t.to_owned());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_matches_closed_form() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at_epoch(0), 2.1e-4);
        for k in 0..120 {
            let want = (2.1e-4 * 0.9f64.powi(k as i32)).max(1e-6);
            assert_eq!(cfg.lr_at_epoch(k), want);
        }
        // 2.1e-4 · 0.9^100 < 1e-6, so epoch 100 is clamped to the floor.
        assert!(2.1e-4 * 0.9f64.powi(100) < 1e-6);
        assert_eq!(cfg.lr_at_epoch(100), 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.lr_floor = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_csv_layout() {
        let rows = vec![EpochStats {
            epoch: 0,
            lr: 2.1e-4,
            train_loss: 1.25,
            val_r_dsc: Some(0.5),
            val_r_nsd: None,
        }];
        let csv = history_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "epoch,lr,train_loss,val_r_dsc,val_r_nsd");
        assert_eq!(lines.next().unwrap(), "0,0.00021000,1.250000,0.500000,nan");
    }
}
