//! Training losses: score regression MAE, soft-dice and cross-entropy on the
//! error-map probabilities, and their weighted combination.
//!
//! Every loss ships with a hand-derived gradient that the tests check against
//! central finite differences in double precision. Two printed-formula
//! variants are kept behind switches: a dice normalization that divides the
//! per-class sum by the voxel count instead of the class count, and a
//! positive-only cross entropy; the defaults are the trainable readings
//! (per-class mean dice, full binary cross entropy).

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};
use crate::nn::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiceNormalization {
    #[default]
    PerClassMean,
    Literal1OverV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CeForm {
    #[default]
    FullBinary,
    LiteralPositiveOnly,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the voxel-level terms relative to the score MAE.
    pub lambda_balance: f64,
    pub dice_normalization: DiceNormalization,
    pub ce_form: CeForm,
    /// Smoothing for dice denominators and probability clamping.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_balance: 1.0,
            dice_normalization: DiceNormalization::default(),
            ce_form: CeForm::default(),
            epsilon: 1e-5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_balance < 0.0 || !self.lambda_balance.is_finite() {
            return Err(SegQcError::InvalidConfig(format!(
                "lambda_balance must be ≥ 0, got {}",
                self.lambda_balance
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(SegQcError::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Predicted/target subject scores for a batch, as (dsc, nsd) pairs.
pub type ScorePairs<F> = [(F, F)];

fn check_same_shape<F>(a: &ArrayD<F>, b: &ArrayD<F>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SegQcError::ShapeMismatch {
            expected: b.shape().to_vec(),
            got: a.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over the batch of |ΔDSC| + |ΔNSD|.
pub fn mae_loss<F: Scalar>(pred: &ScorePairs<F>, gt: &ScorePairs<F>) -> Result<F> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(SegQcError::ShapeMismatch { expected: vec![gt.len()], got: vec![pred.len()] });
    }
    let n = F::from_f64(pred.len() as f64);
    let sum = pred
        .iter()
        .zip(gt.iter())
        .map(|(&(pd, pn), &(gd, gn))| (pd - gd).abs() + (pn - gn).abs())
        .sum::<F>();
    Ok(sum / n)
}

/// Gradient of [`mae_loss`] w.r.t. the predictions.
/// Subgradient convention: sign(0) = 0 at exact equality.
pub fn mae_loss_grad<F: Scalar>(pred: &ScorePairs<F>, gt: &ScorePairs<F>) -> Vec<(F, F)> {
    let n = F::from_f64(pred.len() as f64);
    pred.iter()
        .zip(gt.iter())
        .map(|(&(pd, pn), &(gd, gn))| {
            (sign_of(pd - gd) / n, sign_of(pn - gn) / n)
        })
        .collect()
}

fn sign_of<F: Scalar>(v: F) -> F {
    if v > F::zero() {
        F::one()
    } else if v < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

/// Negative soft dice over the error-map probabilities.
///
/// `sem_prob` and `sem_gt` are (C, ...) with identical shapes; per class
/// `s_c = 2·Σ(p·g) / (Σp + Σg + ε)`. The default aggregation is `-mean_c s_c`;
/// the literal variant divides the per-class sum by the voxel count instead.
pub fn dice_loss<F: Scalar>(sem_prob: &ArrayD<F>, sem_gt: &ArrayD<F>, cfg: &LossConfig) -> Result<F> {
    check_same_shape(sem_prob, sem_gt)?;
    let c = sem_prob.shape()[0];
    let v = sem_prob.len() / c;
    let p = sem_prob.as_slice().expect("standard layout");
    let g = sem_gt.as_slice().expect("standard layout");
    let eps = F::from_f64(cfg.epsilon);
    let mut total = F::zero();
    for ci in 0..c {
        let (pc, gc) = (&p[ci * v..(ci + 1) * v], &g[ci * v..(ci + 1) * v]);
        let inter: F = pc.iter().zip(gc.iter()).map(|(&a, &b)| a * b).sum();
        let den: F = pc.iter().copied().sum::<F>() + gc.iter().copied().sum::<F>() + eps;
        total = total + (F::from_f64(2.0) * inter) / den;
    }
    let norm = match cfg.dice_normalization {
        DiceNormalization::PerClassMean => F::from_f64(c as f64),
        DiceNormalization::Literal1OverV => F::from_f64(v as f64),
    };
    Ok(-total / norm)
}

/// Gradient of [`dice_loss`] w.r.t. `sem_prob`.
pub fn dice_loss_grad<F: Scalar>(
    sem_prob: &ArrayD<F>,
    sem_gt: &ArrayD<F>,
    cfg: &LossConfig,
) -> ArrayD<F> {
    let c = sem_prob.shape()[0];
    let v = sem_prob.len() / c;
    let p = sem_prob.as_slice().expect("standard layout");
    let g = sem_gt.as_slice().expect("standard layout");
    let eps = F::from_f64(cfg.epsilon);
    let two = F::from_f64(2.0);
    let norm = match cfg.dice_normalization {
        DiceNormalization::PerClassMean => F::from_f64(c as f64),
        DiceNormalization::Literal1OverV => F::from_f64(v as f64),
    };
    let mut out = vec![F::zero(); p.len()];
    for ci in 0..c {
        let (pc, gc) = (&p[ci * v..(ci + 1) * v], &g[ci * v..(ci + 1) * v]);
        let inter: F = pc.iter().zip(gc.iter()).map(|(&a, &b)| a * b).sum();
        let den: F = pc.iter().copied().sum::<F>() + gc.iter().copied().sum::<F>() + eps;
        let oc = &mut out[ci * v..(ci + 1) * v];
        // d s_c / d p_i = 2 g_i / den − 2·inter / den²
        let common = two * inter / (den * den);
        for (dst, &gi) in oc.iter_mut().zip(gc.iter()) {
            *dst = -(two * gi / den - common) / norm;
        }
    }
    ArrayD::from_shape_vec(sem_prob.raw_dim(), out).expect("same shape")
}

/// Cross entropy over the error-map probabilities with clamping to
/// [ε, 1−ε]. Full binary by default; the literal variant keeps only the
/// positive term.
pub fn ce_loss<F: Scalar>(sem_prob: &ArrayD<F>, sem_gt: &ArrayD<F>, cfg: &LossConfig) -> Result<F> {
    check_same_shape(sem_prob, sem_gt)?;
    let eps = F::from_f64(cfg.epsilon);
    let one = F::one();
    let n = F::from_f64(sem_prob.len() as f64);
    let mut total = F::zero();
    for (&p0, &g) in sem_prob.iter().zip(sem_gt.iter()) {
        let p = clamp(p0, eps, one - eps);
        total = total
            + match cfg.ce_form {
                CeForm::FullBinary => g * p.ln() + (one - g) * (one - p).ln(),
                CeForm::LiteralPositiveOnly => g * p.ln(),
            };
    }
    Ok(-total / n)
}

/// Gradient of [`ce_loss`] w.r.t. `sem_prob`; zero where the probability was
/// clamped (matching the true derivative of the clamped objective).
pub fn ce_loss_grad<F: Scalar>(
    sem_prob: &ArrayD<F>,
    sem_gt: &ArrayD<F>,
    cfg: &LossConfig,
) -> ArrayD<F> {
    let eps = F::from_f64(cfg.epsilon);
    let one = F::one();
    let n = F::from_f64(sem_prob.len() as f64);
    let mut out = ArrayD::zeros(sem_prob.raw_dim());
    for ((dst, &p), &g) in out.iter_mut().zip(sem_prob.iter()).zip(sem_gt.iter()) {
        if p <= eps || p >= one - eps {
            continue;
        }
        *dst = match cfg.ce_form {
            CeForm::FullBinary => -(g / p - (one - g) / (one - p)) / n,
            CeForm::LiteralPositiveOnly => -(g / p) / n,
        };
    }
    out
}

fn clamp<F: Scalar>(v: F, lo: F, hi: F) -> F {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// `L = L_MAE + λ · (L_DSC + L_CE)`.
pub fn combined_loss<F: Scalar>(
    pred_scores: &ScorePairs<F>,
    gt_scores: &ScorePairs<F>,
    sem_prob: &ArrayD<F>,
    sem_gt: &ArrayD<F>,
    cfg: &LossConfig,
) -> Result<F> {
    cfg.validate()?;
    let lambda = F::from_f64(cfg.lambda_balance);
    Ok(mae_loss(pred_scores, gt_scores)?
        + lambda * (dice_loss(sem_prob, sem_gt, cfg)? + ce_loss(sem_prob, sem_gt, cfg)?))
}

/// Gradients of [`combined_loss`] w.r.t. the predicted scores and the
/// error-map probabilities. The score gradient does not depend on λ.
pub fn combined_loss_grad<F: Scalar>(
    pred_scores: &ScorePairs<F>,
    gt_scores: &ScorePairs<F>,
    sem_prob: &ArrayD<F>,
    sem_gt: &ArrayD<F>,
    cfg: &LossConfig,
) -> (Vec<(F, F)>, ArrayD<F>) {
    let lambda = F::from_f64(cfg.lambda_balance);
    let score_grad = mae_loss_grad(pred_scores, gt_scores);
    let mut sem_grad = dice_loss_grad(sem_prob, sem_gt, cfg);
    let ce_grad = ce_loss_grad(sem_prob, sem_gt, cfg);
    for (d, &c) in sem_grad.iter_mut().zip(ce_grad.iter()) {
        *d = (*d + c) * lambda;
    }
    (score_grad, sem_grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::prelude::*;

    fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(lo..hi))
    }

    #[test]
    fn mae_trivial_cases() {
        let gt: [(f64, f64); 2] = [(0.5, 0.7), (0.2, 0.9)];
        assert_eq!(mae_loss(&gt, &gt).unwrap(), 0.0);
        let pred: [(f64, f64); 1] = [(0.7, 0.8)];
        let gt1: [(f64, f64); 1] = [(0.5, 0.7)];
        assert!((mae_loss(&pred, &gt1).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mae_matches_scalar_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pred: Vec<(f64, f64)> =
            (0..5).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let gt: Vec<(f64, f64)> =
            (0..5).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let got = mae_loss(&pred, &gt).unwrap();
        let mut want = 0.0;
        for i in 0..5 {
            want += (pred[i].0 - gt[i].0).abs();
            want += (pred[i].1 - gt[i].1).abs();
        }
        want /= 5.0;
        assert!((got - want).abs() <= 1e-9);
    }

    #[test]
    fn dice_perfect_overlap_is_minus_one_per_class() {
        let g = ArrayD::from_shape_fn(IxDyn(&[2, 3, 3, 3]), |ix| {
            if (ix[1] + ix[2] + ix[3]) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = LossConfig::default();
        let l: f64 = dice_loss(&g, &g, &cfg).unwrap();
        assert!((l + 1.0).abs() < 1e-3, "loss {l}");
        let zeros = ArrayD::zeros(IxDyn(&[2, 3, 3, 3]));
        assert_eq!(dice_loss(&zeros, &g, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn dice_matches_scalar_loop_both_modes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = uniform(&[2, 4, 4, 4], 0.0, 1.0, &mut rng);
        let g = uniform(&[2, 4, 4, 4], 0.0, 1.0, &mut rng).mapv(|v| (v > 0.5) as u8 as f64);
        for norm in [DiceNormalization::PerClassMean, DiceNormalization::Literal1OverV] {
            let cfg = LossConfig { dice_normalization: norm, ..Default::default() };
            let got = dice_loss(&p, &g, &cfg).unwrap();
            // independent recomputation with plain loops
            let v = 64usize;
            let (ps, gs) = (p.as_slice().unwrap(), g.as_slice().unwrap());
            let mut acc = 0.0;
            for c in 0..2 {
                let mut inter = 0.0;
                let mut sp = 0.0;
                let mut sg = 0.0;
                for i in 0..v {
                    inter += ps[c * v + i] * gs[c * v + i];
                    sp += ps[c * v + i];
                    sg += gs[c * v + i];
                }
                acc += 2.0 * inter / (sp + sg + cfg.epsilon);
            }
            let want = match norm {
                DiceNormalization::PerClassMean => -acc / 2.0,
                DiceNormalization::Literal1OverV => -acc / v as f64,
            };
            assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn ce_trivial_and_loop() {
        let cfg = LossConfig::default();
        let ones = ArrayD::from_elem(IxDyn(&[1, 2, 2, 2]), 1.0 - 1e-5);
        let g1 = ArrayD::from_elem(IxDyn(&[1, 2, 2, 2]), 1.0);
        assert!(ce_loss(&ones, &g1, &cfg).unwrap() < 2e-5);

        let half = ArrayD::from_elem(IxDyn(&[1, 2, 2, 2]), 0.5);
        let g0 = ArrayD::zeros(IxDyn(&[1, 2, 2, 2]));
        let l = ce_loss(&half, &g0, &cfg).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = uniform(&[2, 3, 3, 3], 0.05, 0.95, &mut rng);
        let g = uniform(&[2, 3, 3, 3], 0.0, 1.0, &mut rng).mapv(|v| (v > 0.5) as u8 as f64);
        for form in [CeForm::FullBinary, CeForm::LiteralPositiveOnly] {
            let cfg = LossConfig { ce_form: form, ..Default::default() };
            let got = ce_loss(&p, &g, &cfg).unwrap();
            let mut want = 0.0;
            for (pv, gv) in p.iter().zip(g.iter()) {
                want -= match form {
                    CeForm::FullBinary => gv * pv.ln() + (1.0 - gv) * (1.0 - pv).ln(),
                    CeForm::LiteralPositiveOnly => gv * pv.ln(),
                };
            }
            want /= p.len() as f64;
            assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn combined_reductions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p = uniform(&[2, 3, 3, 3], 0.1, 0.9, &mut rng);
        let g = uniform(&[2, 3, 3, 3], 0.0, 1.0, &mut rng).mapv(|v| (v > 0.5) as u8 as f64);
        let pred = [(0.3, 0.6)];
        let gt = [(0.5, 0.4)];
        // λ = 0 reduces to MAE alone.
        let cfg0 = LossConfig { lambda_balance: 0.0, ..Default::default() };
        assert_eq!(
            combined_loss(&pred, &gt, &p, &g, &cfg0).unwrap(),
            mae_loss(&pred, &gt).unwrap()
        );
        // λ = 1 is the plain sum of the three parts.
        let cfg1 = LossConfig::default();
        let want = mae_loss(&pred, &gt).unwrap()
            + dice_loss(&p, &g, &cfg1).unwrap()
            + ce_loss(&p, &g, &cfg1).unwrap();
        assert!((combined_loss(&pred, &gt, &p, &g, &cfg1).unwrap() - want).abs() <= 1e-12);
    }

    /// Central finite differences of the combined loss against the analytic
    /// gradients, at f64, avoiding the MAE kinks and the CE clamp region.
    #[test]
    fn combined_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let shape = [2usize, 3, 2, 3];
            let p = uniform(&shape, 0.1, 0.9, &mut rng);
            let g = uniform(&shape, 0.0, 1.0, &mut rng).mapv(|v| (v > 0.5) as u8 as f64);
            let pred: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
                .collect();
            let gt: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
                .collect();
            let cfg = LossConfig {
                lambda_balance: [0.5, 1.0, 2.0][trial % 3],
                dice_normalization: if trial % 2 == 0 {
                    DiceNormalization::PerClassMean
                } else {
                    DiceNormalization::Literal1OverV
                },
                ce_form: if trial % 2 == 0 { CeForm::FullBinary } else { CeForm::LiteralPositiveOnly },
                ..Default::default()
            };
            let (sg, pg) = combined_loss_grad(&pred, &gt, &p, &g, &cfg);

            let h = 1e-6;
            // sem_prob coordinates
            for t in 0..6 {
                let idx = (t * 5 + 1) % p.len();
                let mut pp = p.clone();
                pp.as_slice_mut().unwrap()[idx] += h;
                let mut pm = p.clone();
                pm.as_slice_mut().unwrap()[idx] -= h;
                let fd = (combined_loss(&pred, &gt, &pp, &g, &cfg).unwrap()
                    - combined_loss(&pred, &gt, &pm, &g, &cfg).unwrap())
                    / (2.0 * h);
                let an = pg.as_slice().unwrap()[idx];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!((fd - an).abs() / denom <= 1e-4, "sem idx {idx}: fd={fd} an={an}");
            }
            // score coordinates
            for i in 0..pred.len() {
                for comp in 0..2 {
                    let mut pp = pred.clone();
                    let mut pm = pred.clone();
                    if comp == 0 {
                        pp[i].0 += h;
                        pm[i].0 -= h;
                    } else {
                        pp[i].1 += h;
                        pm[i].1 -= h;
                    }
                    let fd = (combined_loss(&pp, &gt, &p, &g, &cfg).unwrap()
                        - combined_loss(&pm, &gt, &p, &g, &cfg).unwrap())
                        / (2.0 * h);
                    let an = if comp == 0 { sg[i].0 } else { sg[i].1 };
                    assert!(
                        (fd - an).abs() <= 1e-4 * (1.0 + fd.abs()),
                        "score ({i},{comp}): fd={fd} an={an}"
                    );
                }
            }
        }
    }

    #[test]
    fn score_gradient_is_lambda_independent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let p = uniform(&[2, 2, 2, 2], 0.1, 0.9, &mut rng);
        let g = uniform(&[2, 2, 2, 2], 0.0, 1.0, &mut rng).mapv(|v| (v > 0.5) as u8 as f64);
        let pred = [(0.3, 0.6), (0.8, 0.2)];
        let gt = [(0.5, 0.4), (0.1, 0.9)];
        let cfg_a = LossConfig { lambda_balance: 0.1, ..Default::default() };
        let cfg_b = LossConfig { lambda_balance: 7.0, ..Default::default() };
        let (sa, _) = combined_loss_grad(&pred, &gt, &p, &g, &cfg_a);
        let (sb, _) = combined_loss_grad(&pred, &gt, &p, &g, &cfg_b);
        assert_eq!(sa, sb);
    }
}
