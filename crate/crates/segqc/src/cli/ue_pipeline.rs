//! Uncertainty-baseline pipeline commands.
//!
//! `ue-calibrate` trains the proxy segmenter, pauses at the requested
//! epochs, and for every (case, epoch) records the Monte-Carlo-dropout
//! uncertainty stack, the segmenter's own prediction quality, and the
//! calibrated features. `ue-eval` fits the score regressor on a case-level
//! split of those features and reports holdout metrics.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::commands::derive_seed;
use crate::datagen::DatasetManifest;
use crate::engine::evaluate::MeanStd;
use crate::error::{Result, SegQcError};
use crate::io::nifti;
use crate::mask::{one_hot, LabelMask};
use crate::metrics::{dsc_sem, mae, multiclass_dsc, nsd, pearson_r, sem_ground_truth};
use crate::proxyseg::{ProxySegConfig, ProxySegNet};
use crate::ue::{
    calibrate_thresholds, derived_class_probability, fit_ue_regressor, umap_features, umap_to_sem,
    uncertainty_scores, ForestConfig, ThresholdCalibration, UncertaintyMode, FEATURES_PER_CLASS,
};
use crate::volume::Volume;

#[allow(clippy::too_many_arguments)]
pub fn ue_calibrate(
    dataset: &Path,
    out: &Path,
    seed: u64,
    passes: usize,
    snapshots: &str,
    proxy_lr: f64,
    score_mode: &str,
    calibration_fraction: f64,
) -> Result<()> {
    let mode = match score_mode {
        "distance" => UncertaintyMode::DistanceFromConfident,
        "literal" => UncertaintyMode::LiteralProbability,
        other => {
            return Err(SegQcError::InvalidConfig(format!(
                "score mode must be 'distance' or 'literal', got '{other}'"
            )))
        }
    };
    if passes == 0 {
        return Err(SegQcError::InvalidConfig("--passes must be at least 1".into()));
    }
    if !(0.0 < calibration_fraction && calibration_fraction < 1.0) {
        return Err(SegQcError::InvalidConfig("calibration fraction must be in (0, 1)".into()));
    }
    let epochs: Vec<usize> = snapshots
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| SegQcError::InvalidConfig(format!("bad snapshot epoch '{s}'")))
        })
        .collect::<Result<_>>()?;
    if epochs.is_empty() {
        return Err(SegQcError::InvalidConfig("snapshot list is empty".into()));
    }
    let mut sorted_epochs = epochs.clone();
    sorted_epochs.sort_unstable();
    sorted_epochs.dedup();
    let max_epoch = *sorted_epochs.last().expect("non-empty");

    let manifest = DatasetManifest::load(dataset)?;
    let hierarchy = manifest.hierarchy.clone();
    let mut cases: Vec<(String, Volume, LabelMask)> = Vec::new();
    for case in &manifest.cases {
        let vol = nifti::read_volume(&dataset.join(&case.image))?;
        let gt = nifti::read_labels(&dataset.join(&case.gt), hierarchy.clone())?;
        cases.push((case.case_id.clone(), vol, gt));
    }
    if cases.is_empty() {
        return Err(SegQcError::Data("dataset has no cases".into()));
    }

    // Walk the proxy's training trajectory, collecting uncertainty samples
    // at each snapshot epoch.
    struct Entry {
        case_id: String,
        case_index: usize,
        epoch: usize,
        dsc: f64,
        nsd: f64,
        scores: ndarray::Array4<f32>,
        sem_gt: crate::metrics::SemStack,
    }
    let in_modalities = cases[0].1.num_modalities();
    let mut proxy = ProxySegNet::new(
        ProxySegConfig::new(in_modalities),
        hierarchy.clone(),
        derive_seed(seed, 0xCAFE),
    )?;
    let refs: Vec<(&Volume, &LabelMask)> = cases.iter().map(|(_, v, g)| (v, g)).collect();
    let mut entries: Vec<Entry> = Vec::new();
    for epoch in 0..=max_epoch {
        if sorted_epochs.binary_search(&epoch).is_ok() {
            for (ci, (case_id, vol, gt)) in cases.iter().enumerate() {
                let umap = proxy.mc_dropout_umap(
                    vol,
                    passes,
                    derive_seed(seed, ((epoch as u64) << 32) | ci as u64),
                    true,
                )?;
                let class_prob = derived_class_probability(&umap, &hierarchy)?;
                let scores = uncertainty_scores(&class_prob, mode);
                let seg = proxy.segment_labels(vol)?;
                let dsc = multiclass_dsc(&seg, gt)?;
                let nsd_v = nsd(&one_hot(&seg), &one_hot(gt), manifest.nsd_tolerance)?;
                let sem_gt = sem_ground_truth(&seg, gt)?;
                entries.push(Entry {
                    case_id: case_id.clone(),
                    case_index: ci,
                    epoch,
                    dsc,
                    nsd: nsd_v,
                    scores,
                    sem_gt,
                });
            }
        }
        if epoch < max_epoch {
            proxy.train(&refs, 1, proxy_lr, derive_seed(seed, 0xD00D + epoch as u64))?;
        }
    }

    // Case-level calibration split.
    let mut case_order: Vec<usize> = (0..cases.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0x5111));
    case_order.shuffle(&mut rng);
    let n_cal = ((cases.len() as f64 * calibration_fraction).ceil() as usize)
        .clamp(1, cases.len().saturating_sub(1).max(1));
    let cal_cases: std::collections::BTreeSet<usize> =
        case_order.into_iter().take(n_cal).collect();

    let cal_scores: Vec<ndarray::Array4<f32>> = entries
        .iter()
        .filter(|e| cal_cases.contains(&e.case_index))
        .map(|e| e.scores.clone())
        .collect();
    let cal_gts: Vec<&crate::metrics::SemStack> = entries
        .iter()
        .filter(|e| cal_cases.contains(&e.case_index))
        .map(|e| &e.sem_gt)
        .collect();
    let calibration = calibrate_thresholds(&cal_scores, &cal_gts, mode, "calibration-split")?;

    fs::create_dir_all(out).map_err(|e| SegQcError::io(out.display().to_string(), e))?;
    let p = out.join("calibration.json");
    fs::write(&p, serde_json::to_string_pretty(&calibration)?)
        .map_err(|e| SegQcError::io(p.display().to_string(), e))?;

    // Feature table for every entry (exportable CSV interface).
    let c = hierarchy.num_classes();
    let mut csv = String::from("case_id,epoch,split,dsc,nsd,dsc_sem_ue_mean");
    for ci in 0..c {
        for f in 0..FEATURES_PER_CLASS {
            csv.push_str(&format!(",f_{}_{}", hierarchy.class_name(ci), f));
        }
    }
    csv.push('\n');
    for e in &entries {
        let feats = umap_features(&e.scores, &calibration.thresholds);
        let sem_pred = umap_to_sem(&e.scores, &calibration, &hierarchy)?;
        let (_, sem_mean) = dsc_sem(&sem_pred, &e.sem_gt)?;
        let split = if cal_cases.contains(&e.case_index) { "calibration" } else { "holdout" };
        csv.push_str(&format!(
            "{},{},{split},{:.6},{:.6},{:.6}",
            e.case_id, e.epoch, e.dsc, e.nsd, sem_mean
        ));
        for v in feats {
            csv.push_str(&format!(",{v:.6}"));
        }
        csv.push('\n');
    }
    let p = out.join("features.csv");
    fs::write(&p, csv).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
    println!(
        "ue-calibrate: {} uncertainty samples, thresholds {:?} -> {}",
        entries.len(),
        calibration.thresholds,
        out.display()
    );
    Ok(())
}

pub fn ue_eval(ue_dir: &Path, seed: u64, train_fraction: f64, out: &Path) -> Result<()> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(SegQcError::InvalidConfig("train fraction must be in (0, 1)".into()));
    }
    let p = ue_dir.join("features.csv");
    let raw = fs::read_to_string(&p).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
    let mut lines = raw.lines();
    let header =
        lines.next().ok_or_else(|| SegQcError::Data("features.csv is empty".into()))?;
    let n_cols = header.split(',').count();
    if n_cols <= 6 {
        return Err(SegQcError::Data("features.csv carries no feature columns".into()));
    }

    struct Row {
        case_id: String,
        dsc: f64,
        nsd: f64,
        dsc_sem_ue: f64,
        features: Vec<f64>,
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(SegQcError::Data(format!(
                "features.csv row has {} fields, expected {n_cols}",
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| SegQcError::Data(format!("bad number '{s}'")))
        };
        rows.push(Row {
            case_id: fields[0].to_string(),
            dsc: parse(fields[3])?,
            nsd: parse(fields[4])?,
            dsc_sem_ue: parse(fields[5])?,
            features: fields[6..].iter().map(|f| parse(f)).collect::<Result<_>>()?,
        });
    }
    if rows.is_empty() {
        return Err(SegQcError::Data("features.csv has no rows".into()));
    }

    // Case-level split so no case leaks between fitting and testing.
    let mut case_ids: Vec<String> = rows.iter().map(|r| r.case_id.clone()).collect();
    case_ids.sort();
    case_ids.dedup();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0xEE));
    case_ids.shuffle(&mut rng);
    let n_train = ((case_ids.len() as f64 * train_fraction).round() as usize)
        .clamp(1, case_ids.len().saturating_sub(1).max(1));
    let train_cases: std::collections::BTreeSet<&String> =
        case_ids.iter().take(n_train).collect();

    let train_rows: Vec<&Row> = rows.iter().filter(|r| train_cases.contains(&r.case_id)).collect();
    let test_rows: Vec<&Row> = rows.iter().filter(|r| !train_cases.contains(&r.case_id)).collect();
    if test_rows.is_empty() {
        return Err(SegQcError::Data("holdout split is empty; lower --train-fraction".into()));
    }
    let features: Vec<Vec<f64>> = train_rows.iter().map(|r| r.features.clone()).collect();
    let targets: Vec<(f64, f64)> = train_rows.iter().map(|r| (r.dsc, r.nsd)).collect();
    let regressor =
        fit_ue_regressor(&features, &targets, &ForestConfig::default(), derive_seed(seed, 0xF0))?;

    let mut pred_d = Vec::new();
    let mut gt_d = Vec::new();
    let mut pred_n = Vec::new();
    let mut gt_n = Vec::new();
    let mut sem_means = Vec::new();
    for r in &test_rows {
        let (d, n) = regressor.predict(&r.features);
        pred_d.push(d);
        gt_d.push(r.dsc);
        pred_n.push(n);
        gt_n.push(r.nsd);
        sem_means.push(r.dsc_sem_ue);
    }
    let r_dsc = pearson_r(&pred_d, &gt_d).ok();
    let r_nsd = pearson_r(&pred_n, &gt_n).ok();
    let (mae_d, mae_d_std) = mae(&pred_d, &gt_d)?;
    let (mae_n, mae_n_std) = mae(&pred_n, &gt_n)?;
    let sem_mean = sem_means.iter().sum::<f64>() / sem_means.len() as f64;

    let calibration: Option<ThresholdCalibration> =
        fs::read_to_string(ue_dir.join("calibration.json"))
            .ok()
            .and_then(|raw| serde_json::from_str(&raw).ok());

    let report = serde_json::json!({
        "n_train_rows": train_rows.len(),
        "n_test_rows": test_rows.len(),
        "pearson_r_dsc": r_dsc,
        "pearson_r_nsd": r_nsd,
        "mae_dsc": MeanStd { mean: mae_d, std: mae_d_std },
        "mae_nsd": MeanStd { mean: mae_n, std: mae_n_std },
        "dsc_sem_ue_mean": sem_mean,
        "regressor_degenerate": regressor.degenerate,
        "calibration": calibration,
    });
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| SegQcError::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(out, serde_json::to_string_pretty(&report)?)
        .map_err(|e| SegQcError::io(out.display().to_string(), e))?;
    println!(
        "ue-eval: r_dsc={r_dsc:?} r_nsd={r_nsd:?} mae_dsc={mae_d:.4} dsc_sem={sem_mean:.4} -> {}",
        out.display()
    );
    Ok(())
}
