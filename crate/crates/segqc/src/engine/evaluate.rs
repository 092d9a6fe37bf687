//! Evaluation harness over a deterministic balanced index.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::ensemble_predict;
use super::store::CaseStore;
use crate::datagen::BalancedIndex;
use crate::error::{Result, SegQcError};
use crate::metrics::{dsc_sem, mae, pearson_r, sem_ground_truth};
use crate::model::QcResUNet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub n_evaluated: usize,
    /// `None` when the correlation was undefined (flagged in `notes`).
    pub pearson_r_dsc: Option<f64>,
    pub pearson_r_nsd: Option<f64>,
    pub mae_dsc: MeanStd,
    pub mae_nsd: MeanStd,
    /// Per derived class, distribution over subjects.
    pub dsc_sem_per_class: Vec<MeanStd>,
    pub dsc_sem_mean: MeanStd,
    pub class_names: Vec<String>,
    /// False when some index entries could not be evaluated.
    pub complete: bool,
    pub errors: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordRow {
    pub id: String,
    pub dsc_gt: f64,
    pub dsc_pred: f64,
    pub nsd_gt: f64,
    pub nsd_pred: f64,
    pub dsc_sem: Vec<f64>,
    pub dsc_sem_mean: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

/// Evaluates an ensemble over every entry of a deterministic index.
///
/// Entries that fail to load are collected into the report's error list; the
/// report is still produced over the remainder with `complete = false`.
pub fn evaluate(
    models: &[&QcResUNet],
    store: &CaseStore,
    index: &BalancedIndex,
) -> Result<(EvalReport, Vec<RecordRow>)> {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for id in index.all_ids() {
        match evaluate_one(models, store, &id) {
            Ok(row) => rows.push(row),
            Err(e) => errors.push(format!("{id}: {e}")),
        }
    }
    if rows.is_empty() {
        return Err(SegQcError::Data("no index entry could be evaluated".into()));
    }

    let gt_d: Vec<f64> = rows.iter().map(|r| r.dsc_gt).collect();
    let pr_d: Vec<f64> = rows.iter().map(|r| r.dsc_pred).collect();
    let gt_n: Vec<f64> = rows.iter().map(|r| r.nsd_gt).collect();
    let pr_n: Vec<f64> = rows.iter().map(|r| r.nsd_pred).collect();

    let mut notes = Vec::new();
    let r_dsc = match pearson_r(&pr_d, &gt_d) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("pearson_r_dsc undefined: {e}"));
            None
        }
    };
    let r_nsd = match pearson_r(&pr_n, &gt_n) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("pearson_r_nsd undefined: {e}"));
            None
        }
    };
    let (mae_d_mean, mae_d_std) = mae(&pr_d, &gt_d)?;
    let (mae_n_mean, mae_n_std) = mae(&pr_n, &gt_n)?;

    let c = rows[0].dsc_sem.len();
    let dsc_sem_per_class: Vec<MeanStd> = (0..c)
        .map(|ci| mean_std(&rows.iter().map(|r| r.dsc_sem[ci]).collect::<Vec<_>>()))
        .collect();
    let dsc_sem_mean = mean_std(&rows.iter().map(|r| r.dsc_sem_mean).collect::<Vec<_>>());

    let report = EvalReport {
        n_evaluated: rows.len(),
        pearson_r_dsc: r_dsc,
        pearson_r_nsd: r_nsd,
        mae_dsc: MeanStd { mean: mae_d_mean, std: mae_d_std },
        mae_nsd: MeanStd { mean: mae_n_mean, std: mae_n_std },
        dsc_sem_per_class,
        dsc_sem_mean,
        class_names: store
            .manifest
            .hierarchy
            .derived_classes()
            .iter()
            .map(|d| d.name.clone())
            .collect(),
        complete: errors.is_empty(),
        errors,
        notes,
    };
    Ok((report, rows))
}

fn evaluate_one(models: &[&QcResUNet], store: &CaseStore, id: &str) -> Result<RecordRow> {
    let (vol, gt, query, rec) = store.triple(id)?;
    let pred = ensemble_predict(models, vol, query)?;
    let sem_gt = sem_ground_truth(query, gt)?;
    let (per_class, mean) = dsc_sem(&pred.sem, &sem_gt)?;
    Ok(RecordRow {
        id: id.to_string(),
        dsc_gt: rec.dsc,
        dsc_pred: pred.dsc_pred,
        nsd_gt: rec.nsd,
        nsd_pred: pred.nsd_pred,
        dsc_sem: per_class,
        dsc_sem_mean: mean,
    })
}

/// Per-record CSV:
/// `subject_id,dsc_gt,dsc_pred,nsd_gt,nsd_pred,dsc_sem_<class>...,dsc_sem_mean`.
pub fn records_csv(rows: &[RecordRow], class_names: &[String]) -> String {
    let mut out = String::from("subject_id,dsc_gt,dsc_pred,nsd_gt,nsd_pred");
    for name in class_names {
        out.push_str(&format!(",dsc_sem_{name}"));
    }
    out.push_str(",dsc_sem_mean\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.id, r.dsc_gt, r.dsc_pred, r.nsd_gt, r.nsd_pred
        ));
        for v in &r.dsc_sem {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push_str(&format!(",{:.6}\n", r.dsc_sem_mean));
    }
    out
}

/// Writes `report.json`, `records.csv`, and the scatter-plot data files.
pub fn write_report(dir: &Path, report: &EvalReport, rows: &[RecordRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SegQcError::io(dir.display().to_string(), e))?;
    let io_at = |p: &Path| {
        let owned = p.display().to_string();
        move |e| SegQcError::io(owned.clone(), e)
    };
    let p = dir.join("report.json");
    fs::write(&p, serde_json::to_string_pretty(report)?).map_err(io_at(&p))?;
    let p = dir.join("records.csv");
    fs::write(&p, records_csv(rows, &report.class_names)).map_err(io_at(&p))?;
    let scatter: [(&str, Vec<f64>, Vec<f64>); 2] = [
        (
            "scatter_dsc.csv",
            rows.iter().map(|r| r.dsc_gt).collect(),
            rows.iter().map(|r| r.dsc_pred).collect(),
        ),
        (
            "scatter_nsd.csv",
            rows.iter().map(|r| r.nsd_gt).collect(),
            rows.iter().map(|r| r.nsd_pred).collect(),
        ),
    ];
    for (name, gt, pred) in scatter {
        let mut s = String::from("gt,pred\n");
        for (g, p) in gt.iter().zip(pred.iter()) {
            s.push_str(&format!("{g:.6},{p:.6}\n"));
        }
        let p = dir.join(name);
        fs::write(&p, s).map_err(io_at(&p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_population_formula() {
        let ms = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((ms.mean - 2.5).abs() < 1e-12);
        assert!((ms.std - (1.25f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let rows = vec![RecordRow {
            id: "c/s".into(),
            dsc_gt: 0.5,
            dsc_pred: 0.6,
            nsd_gt: 0.4,
            nsd_pred: 0.45,
            dsc_sem: vec![0.7, 0.8, 0.9],
            dsc_sem_mean: 0.8,
        }];
        let names = vec!["WT".to_string(), "TC".to_string(), "ET".to_string()];
        let csv = records_csv(&rows, &names);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with(
            "subject_id,dsc_gt,dsc_pred,nsd_gt,nsd_pred,dsc_sem_WT,dsc_sem_TC,dsc_sem_ET,dsc_sem_mean"
        ));
    }
}
