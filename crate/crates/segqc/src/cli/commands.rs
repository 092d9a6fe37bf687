//! Implementations of the dataset / training / evaluation subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::datagen::{
    build_balanced_index, build_balanced_sampler, generate_phantom, seggen_degrade,
    snapshot_segmentations, CaseEntry, DatasetManifest, IndexFile, PhantomSpec, SegGenParams,
    SegMeta, SegRecord,
};
use crate::engine::{
    evaluate, history_csv, train as engine_train, write_report, CaseStore, TrainConfig,
};
use crate::error::{Result, SegQcError};
use crate::explain::{grad_cam, CamLayer, CamTarget};
use crate::io::nifti;
use crate::losses::LossConfig;
use crate::mask::{one_hot, to_multiclass, LabelMask};
use crate::metrics::{multiclass_dsc, nsd, sem_ground_truth, SemStack, DEFAULT_NSD_TOLERANCE};
use crate::model::{load_checkpoint, save_checkpoint, QcResUNet, QcResUNetConfig};
use crate::proxyseg::{ProxySegConfig, ProxySegNet};
use crate::volume::Volume;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw =
        fs::read_to_string(path).map_err(|e| SegQcError::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&raw)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| SegQcError::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(value)?)
        .map_err(|e| SegQcError::io(path.display().to_string(), e))
}

/// Derives a per-item seed from a master seed and a stable index.
pub(crate) fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 step
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(i)` for every index, chunked over `workers` scoped threads.
fn parallel_for<F>(n: usize, workers: usize, f: F) -> Result<()>
where
    F: Fn(usize) -> Result<()> + Sync,
{
    if workers <= 1 || n <= 1 {
        for i in 0..n {
            f(i)?;
        }
        return Ok(());
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let failure: Mutex<Option<SegQcError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n || failure.lock().expect("poisoned").is_some() {
                    break;
                }
                if let Err(e) = f(i) {
                    *failure.lock().expect("poisoned") = Some(e);
                    break;
                }
            });
        }
    });
    match failure.into_inner().expect("poisoned") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn synth(
    spec: Option<&Path>,
    out: &Path,
    count: usize,
    seed: u64,
    grid: usize,
    workers: usize,
) -> Result<()> {
    if count == 0 {
        return Err(SegQcError::InvalidConfig("--count must be at least 1".into()));
    }
    let spec: PhantomSpec = match spec {
        Some(p) => read_json(p)?,
        None => PhantomSpec::default_brain(grid),
    };
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| SegQcError::io(out.display().to_string(), e))?;
    write_json(&out.join("phantom_spec.json"), &spec)?;

    let entries: Mutex<Vec<CaseEntry>> = Mutex::new(Vec::with_capacity(count));
    parallel_for(count, workers, |i| {
        let case_id = format!("case{i:04}");
        let (volume, gt) = generate_phantom(&spec, derive_seed(seed, i as u64))?;
        let image_rel = DatasetManifest::image_rel(&case_id);
        let gt_rel = DatasetManifest::gt_rel(&case_id);
        nifti::write_volume(&out.join(&image_rel), &volume)?;
        nifti::write_labels(&out.join(&gt_rel), &gt, volume.spacing())?;
        entries.lock().expect("poisoned").push(CaseEntry {
            case_id,
            image: image_rel,
            gt: gt_rel,
            segs: Vec::new(),
        });
        Ok(())
    })?;

    let mut manifest = DatasetManifest::new(spec.hierarchy.clone(), DEFAULT_NSD_TOLERANCE);
    manifest.cases = entries.into_inner().expect("poisoned");
    manifest.cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    manifest.save(out)?;
    println!("synth: wrote {count} cases to {}", out.display());
    Ok(())
}

/// Stable key for the snapshot cache.
fn fnv_hex(parts: &[String]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in parts {
        for b in p.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[allow(clippy::too_many_arguments)]
pub fn degrade(
    dataset: &Path,
    seggen: Option<&Path>,
    snapshots: Option<&str>,
    snapshot_lr: f64,
    severities: &[f64],
    seed: u64,
    workers: usize,
) -> Result<()> {
    let mut manifest = DatasetManifest::load(dataset)?;
    let params: SegGenParams = match seggen {
        Some(p) => read_json(p)?,
        None => SegGenParams::default(),
    };
    params.validate()?;
    if severities.is_empty() || severities.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(SegQcError::InvalidConfig("severities must be non-negative".into()));
    }
    let tolerance = manifest.nsd_tolerance;

    // Load all cases once.
    let mut cases: Vec<(String, Volume, LabelMask)> = Vec::new();
    for case in &manifest.cases {
        let vol = nifti::read_volume(&dataset.join(&case.image))?;
        let gt = nifti::read_labels(&dataset.join(&case.gt), manifest.hierarchy.clone())?;
        cases.push((case.case_id.clone(), vol, gt));
    }

    // Per-case degradations: one identity copy plus applications_per_gt
    // seggen rounds per severity.
    let results: Mutex<Vec<(usize, Vec<(String, LabelMask, SegMeta)>)>> = Mutex::new(Vec::new());
    parallel_for(cases.len(), workers, |ci| {
        let (_, _, gt) = &cases[ci];
        let mut segs: Vec<(String, LabelMask, SegMeta)> = Vec::new();
        segs.push((
            "identity".to_string(),
            gt.clone(),
            SegMeta { generator: "identity".into(), dsc: 1.0, nsd: 1.0, seed: 0 },
        ));
        let mut k = 0u64;
        for &severity in severities {
            let p = params.with_severity(severity);
            for round in 0..params.applications_per_gt {
                let s = derive_seed(seed, (ci as u64) << 24 | k);
                k += 1;
                let deg = seggen_degrade(gt, &p, s)?;
                let dsc = multiclass_dsc(&deg, gt)?;
                let nsd_v = nsd(&one_hot(&deg), &one_hot(gt), tolerance)?;
                segs.push((
                    format!("seggen_s{severity:.2}_r{round}"),
                    deg,
                    SegMeta {
                        generator: format!("seggen:s{severity:.2}"),
                        dsc,
                        nsd: nsd_v,
                        seed: s,
                    },
                ));
            }
        }
        results.lock().expect("poisoned").push((ci, segs));
        Ok(())
    })?;
    let mut per_case: Vec<(usize, Vec<(String, LabelMask, SegMeta)>)> =
        results.into_inner().expect("poisoned");
    per_case.sort_by_key(|(ci, _)| *ci);

    // Snapshot segmentations along a proxy training run (optionally cached).
    if let Some(spec) = snapshots {
        let epochs: Vec<usize> = spec
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim().parse::<usize>().map_err(|_| {
                    SegQcError::InvalidConfig(format!("bad snapshot epoch '{s}'"))
                })
            })
            .collect::<Result<_>>()?;
        if epochs.is_empty() {
            return Err(SegQcError::InvalidConfig("snapshot list is empty".into()));
        }
        let cache_key = fnv_hex(&[
            format!("seed={seed}"),
            format!("lr={snapshot_lr}"),
            format!("epochs={epochs:?}"),
            format!("cases={}", cases.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join("+")),
        ]);
        let cache_dir = std::env::var_os("SEGQC_CACHE")
            .map(|root| PathBuf::from(root).join(format!("snapshots-{cache_key}")));

        let mut records: Vec<(usize, usize, LabelMask)> = Vec::new();
        let cache_hit = cache_dir.as_ref().is_some_and(|d| d.join("DONE").exists());
        if let (true, Some(dir)) = (cache_hit, cache_dir.as_ref()) {
            for (ci, (case_id, _, _)) in cases.iter().enumerate() {
                for &e in &epochs {
                    let p = dir.join(format!("{case_id}_e{e:04}.nii.gz"));
                    records.push((ci, e, nifti::read_labels(&p, manifest.hierarchy.clone())?));
                }
            }
        } else {
            let in_modalities = cases[0].1.num_modalities();
            let mut proxy = ProxySegNet::new(
                ProxySegConfig::new(in_modalities),
                manifest.hierarchy.clone(),
                derive_seed(seed, 0xA11CE),
            )?;
            let refs: Vec<(&Volume, &LabelMask)> =
                cases.iter().map(|(_, v, g)| (v, g)).collect();
            let snaps =
                snapshot_segmentations(&mut proxy, &refs, &epochs, snapshot_lr, derive_seed(seed, 0xB0B))?;
            for rec in snaps {
                records.push((rec.case_index, rec.epoch, rec.segmentation));
            }
            if let Some(dir) = cache_dir.as_ref() {
                fs::create_dir_all(dir)
                    .map_err(|e| SegQcError::io(dir.display().to_string(), e))?;
                for (ci, e, seg) in &records {
                    let p = dir.join(format!("{}_e{e:04}.nii.gz", cases[*ci].0));
                    nifti::write_labels(&p, seg, [1.0; 3])?;
                }
                fs::write(dir.join("DONE"), b"ok")
                    .map_err(|e| SegQcError::io(dir.display().to_string(), e))?;
            }
        }
        for (ci, epoch, seg) in records {
            let gt = &cases[ci].2;
            let dsc = multiclass_dsc(&seg, gt)?;
            let nsd_v = nsd(&one_hot(&seg), &one_hot(gt), tolerance)?;
            per_case[ci].1.push((
                format!("snapshot_e{epoch:04}"),
                seg,
                SegMeta {
                    generator: format!("snapshot:e{epoch:04}"),
                    dsc,
                    nsd: nsd_v,
                    seed,
                },
            ));
        }
    }

    // Write segmentations + metadata, update the manifest.
    for (ci, segs) in per_case {
        let (case_id, vol, _) = &cases[ci];
        let entry =
            manifest.cases.iter_mut().find(|c| &c.case_id == case_id).expect("case exists");
        entry.segs.clear();
        for (seg_id, mask, meta) in segs {
            let rel = DatasetManifest::seg_rel(case_id, &seg_id);
            nifti::write_labels(&dataset.join(&rel), &mask, vol.spacing())?;
            write_json(
                &dataset.join(format!("cases/{case_id}/segs/{seg_id}.meta.json")),
                &meta,
            )?;
            entry.segs.push(SegRecord {
                seg_id,
                path: rel,
                generator: meta.generator,
                dsc: meta.dsc,
                nsd: meta.nsd,
                seed: meta.seed,
            });
        }
        entry.segs.sort_by(|a, b| a.seg_id.cmp(&b.seg_id));
    }
    manifest.save(dataset)?;
    let total: usize = manifest.cases.iter().map(|c| c.segs.len()).sum();
    println!("degrade: dataset now holds {total} segmentations");
    Ok(())
}

pub fn balance(
    dataset: &Path,
    bins: usize,
    mode: &str,
    seed: u64,
    out: &Path,
    cases_file: Option<&Path>,
) -> Result<()> {
    let manifest = DatasetManifest::load(dataset)?;
    let keep: Option<BTreeSet<String>> = match cases_file {
        Some(p) => {
            let raw =
                fs::read_to_string(p).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
            Some(raw.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
        }
        None => None,
    };
    let mut records = manifest.quality_records(true);
    if let Some(keep) = &keep {
        records.retain(|(id, _)| {
            keep.contains(id.split('/').next().expect("global ids have a case part"))
        });
    }
    let file = match mode {
        "eval" => IndexFile::Eval { index: build_balanced_index(&records, bins, seed)? },
        "train" => IndexFile::Train { sampler: build_balanced_sampler(&records, bins)? },
        other => {
            return Err(SegQcError::InvalidConfig(format!(
                "mode must be 'train' or 'eval', got '{other}'"
            )))
        }
    };
    write_json(out, &file)?;
    let n = match &file {
        IndexFile::Eval { index } => index.len(),
        IndexFile::Train { sampler } => sampler.epoch_len(),
    };
    println!("balance: {mode} index with {n} entries per draw written to {}", out.display());
    Ok(())
}

fn load_index(path: &Path) -> Result<IndexFile> {
    read_json(path)
}

fn case_subset_of_ids(ids: &[String]) -> BTreeSet<String> {
    ids.iter()
        .map(|id| id.split('/').next().expect("global ids have a case part").to_string())
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    dataset: &Path,
    index: &Path,
    val_index: Option<&Path>,
    config: Option<&Path>,
    loss: Option<&Path>,
    model: Option<&Path>,
    arch: &str,
    base_filters: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let manifest = DatasetManifest::load(dataset)?;
    let IndexFile::Train { sampler } = load_index(index)? else {
        return Err(SegQcError::InvalidConfig(
            "--index must be a train-mode index (see `segqc balance --mode train`)".into(),
        ));
    };
    let val = match val_index {
        Some(p) => match load_index(p)? {
            IndexFile::Eval { index } => Some(index),
            IndexFile::Train { .. } => {
                return Err(SegQcError::InvalidConfig(
                    "--val-index must be an eval-mode index".into(),
                ))
            }
        },
        None => None,
    };

    let mut tcfg: TrainConfig = match config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    tcfg.seed = seed;
    let lcfg: LossConfig = match loss {
        Some(p) => read_json(p)?,
        None => LossConfig::default(),
    };

    // Load only the cases the indices touch.
    let mut subset = case_subset_of_ids(&sampler.pools.iter().flatten().cloned().collect::<Vec<_>>());
    if let Some(v) = &val {
        subset.extend(case_subset_of_ids(&v.all_ids()));
    }
    let store = CaseStore::load(dataset, &manifest, Some(&subset))?;

    let mut net = match model {
        Some(p) => {
            let cfg: QcResUNetConfig = read_json(p)?;
            QcResUNet::new(cfg, derive_seed(seed, 1))?
        }
        None => {
            let first = store.case_ids();
            let first = store.case(first.first().ok_or_else(|| {
                SegQcError::Data("training index references no cases".into())
            })?)?;
            let m = first.volume.num_modalities();
            let c = manifest.hierarchy.num_classes();
            let cfg = match arch {
                "brain" => QcResUNetConfig::brain(m, c, base_filters),
                "cardiac" => QcResUNetConfig::cardiac(m, c, base_filters),
                other => {
                    return Err(SegQcError::InvalidConfig(format!(
                        "arch must be 'brain' or 'cardiac', got '{other}'"
                    )))
                }
            };
            QcResUNet::new(cfg, derive_seed(seed, 1))?
        }
    };

    let output = engine_train(&mut net, &store, &sampler, val.as_ref(), &tcfg, &lcfg)?;
    save_checkpoint(&net, out)?;
    fs::write(out.join("history.csv"), history_csv(&output.history))
        .map_err(|e| SegQcError::io(out.display().to_string(), e))?;
    write_json(
        &out.join("train_summary.json"),
        &serde_json::json!({
            "best_epoch": output.best_epoch,
            "best_val_r": output.best_val_r,
            "epochs": output.history.len(),
            "train_config": tcfg,
            "loss_config": lcfg,
        }),
    )?;
    println!(
        "train: {} epochs, best epoch {:?}, checkpoint at {}",
        output.history.len(),
        output.best_epoch,
        out.display()
    );
    Ok(())
}

pub fn eval(dataset: &Path, index: &Path, ckpts: &[PathBuf], out: &Path) -> Result<()> {
    let manifest = DatasetManifest::load(dataset)?;
    let IndexFile::Eval { index } = load_index(index)? else {
        return Err(SegQcError::InvalidConfig(
            "--index must be an eval-mode (deterministic) index".into(),
        ));
    };
    let models: Vec<QcResUNet> =
        ckpts.iter().map(|p| load_checkpoint(p)).collect::<Result<_>>()?;
    let refs: Vec<&QcResUNet> = models.iter().collect();
    let subset = case_subset_of_ids(&index.all_ids());
    let store = CaseStore::load(dataset, &manifest, Some(&subset))?;
    let (report, rows) = evaluate(&refs, &store, &index)?;
    write_report(out, &report, &rows)?;
    println!(
        "eval: n={} r_dsc={:?} r_nsd={:?} mae_dsc={:.4} dsc_sem={:.4} -> {}",
        report.n_evaluated,
        report.pearson_r_dsc,
        report.pearson_r_nsd,
        report.mae_dsc.mean,
        report.dsc_sem_mean.mean,
        out.display()
    );
    Ok(())
}

pub fn predict(
    ckpts: &[PathBuf],
    image: &Path,
    mask: &Path,
    out: &Path,
    oracle_gt: Option<&Path>,
    hierarchy_spec: &str,
) -> Result<()> {
    let hierarchy = super::parse_hierarchy(hierarchy_spec)?;
    let volume = nifti::read_volume(image)?;
    let query = nifti::read_labels(mask, hierarchy.clone())?;
    fs::create_dir_all(out).map_err(|e| SegQcError::io(out.display().to_string(), e))?;

    let (dsc, nsd_v, sem): (f64, f64, SemStack) = match oracle_gt {
        Some(gt_path) => {
            // Oracle bypass: exact metrics against the provided reference.
            let gt = nifti::read_labels(gt_path, hierarchy.clone())?;
            let dsc = multiclass_dsc(&query, &gt)?;
            let nsd_v = nsd(&one_hot(&query), &one_hot(&gt), DEFAULT_NSD_TOLERANCE)?;
            (dsc, nsd_v, sem_ground_truth(&query, &gt)?)
        }
        None => {
            if ckpts.is_empty() {
                return Err(SegQcError::InvalidConfig(
                    "provide --ckpt (or --oracle-gt for the model-free path)".into(),
                ));
            }
            let models: Vec<QcResUNet> =
                ckpts.iter().map(|p| load_checkpoint(p)).collect::<Result<_>>()?;
            let refs: Vec<&QcResUNet> = models.iter().collect();
            let pred = crate::engine::ensemble_predict(&refs, &volume, &query)?;
            let prob_path = out.join("sem_prob.nii.gz");
            nifti::write_stack(&prob_path, &pred.mean_sem_prob, volume.spacing())?;
            (pred.dsc_pred, pred.nsd_pred, pred.sem)
        }
    };

    // Binary per-class error maps plus the recomposed multi-class error mask.
    let sem_f32 = sem.data().mapv(|b| b as u8 as f32);
    nifti::write_stack(&out.join("sem.nii.gz"), &sem_f32, volume.spacing())?;
    let stack = crate::mask::BinaryMaskStack::new(sem.data().clone(), hierarchy)?;
    let (multiclass, consistency) = to_multiclass(&stack);
    nifti::write_labels(&out.join("error_mask.nii.gz"), &multiclass, volume.spacing())?;
    write_json(
        &out.join("prediction.json"),
        &serde_json::json!({
            "dsc": dsc,
            "nsd": nsd_v,
            "oracle": oracle_gt.is_some(),
            "error_mask_inconsistent_voxels": consistency.inconsistent_voxels,
        }),
    )?;
    println!("predict: dsc={dsc:.4} nsd={nsd_v:.4} -> {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn explain(
    ckpt: &Path,
    image: &Path,
    mask: &Path,
    target: &str,
    layer: &str,
    out: &Path,
    hierarchy_spec: &str,
) -> Result<()> {
    let hierarchy = super::parse_hierarchy(hierarchy_spec)?;
    let model = load_checkpoint(ckpt)?;
    let volume = nifti::read_volume(image)?;
    let query = nifti::read_labels(mask, hierarchy)?;
    let target = match target {
        "dsc" => CamTarget::Dsc,
        "nsd" => CamTarget::Nsd,
        other => {
            return Err(SegQcError::InvalidConfig(format!(
                "target must be 'dsc' or 'nsd', got '{other}'"
            )))
        }
    };
    let layer = match layer {
        "block4" => CamLayer::Block4,
        "block3" => CamLayer::Block3,
        other => {
            return Err(SegQcError::InvalidConfig(format!(
                "layer must be 'block4' or 'block3', got '{other}'"
            )))
        }
    };
    let cam = grad_cam(&model, &volume, &query, target, layer)?;
    let (d, h, w) = cam.heatmap.dim();
    let stack = cam
        .heatmap
        .clone()
        .into_shape_with_order((1, d, h, w))
        .expect("heatmap reshape");
    nifti::write_stack(out, &stack, volume.spacing())?;
    let meta = out.with_extension("").with_extension("meta.json");
    write_json(
        &meta,
        &serde_json::json!({
            "target": target,
            "layer": layer,
            "zero_gradient": cam.zero_gradient,
        }),
    )?;
    if cam.zero_gradient {
        eprintln!("warning: target gradient vanished everywhere; heatmap is all zero");
    }
    println!("explain: wrote {}", out.display());
    Ok(())
}

pub fn report(input: &Path, plots: bool) -> Result<()> {
    let records_path = input.join("records.csv");
    let raw = fs::read_to_string(&records_path)
        .map_err(|e| SegQcError::io(records_path.display().to_string(), e))?;
    let mut lines = raw.lines();
    let header = lines
        .next()
        .ok_or_else(|| SegQcError::Data("records.csv is empty".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let sem_cols: Vec<(usize, String)> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("dsc_sem_") && **c != "dsc_sem_mean")
        .map(|(i, c)| (i, c.trim_start_matches("dsc_sem_").to_string()))
        .collect();
    let mut table: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        table.push(
            fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().unwrap_or(f64::NAN))
                .collect(),
        );
    }
    if !plots {
        println!("report: {} records in {}", table.len(), records_path.display());
        return Ok(());
    }
    let plots_dir = input.join("plots");
    fs::create_dir_all(&plots_dir)
        .map_err(|e| SegQcError::io(plots_dir.display().to_string(), e))?;

    // Scatter data (ground truth vs prediction) for both scores.
    for (name, gt_col, pred_col) in [("scatter_dsc.csv", 0usize, 1usize), ("scatter_nsd.csv", 2, 3)] {
        let mut s = String::from("gt,pred\n");
        for row in &table {
            s.push_str(&format!("{:.6},{:.6}\n", row[gt_col], row[pred_col]));
        }
        let p = plots_dir.join(name);
        fs::write(&p, s).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
    }

    // Per-class error-map Dice histograms (10 bins over [0, 1]).
    for (col, class) in &sem_cols {
        let mut counts = [0usize; 10];
        for row in &table {
            let v = row[col - 1];
            if v.is_finite() {
                counts[crate::datagen::quality_bin(v.clamp(0.0, 1.0), 10)] += 1;
            }
        }
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (b, &c) in counts.iter().enumerate() {
            s.push_str(&format!("{:.1},{:.1},{c}\n", b as f64 / 10.0, (b + 1) as f64 / 10.0));
        }
        let p = plots_dir.join(format!("hist_dsc_sem_{class}.csv"));
        fs::write(&p, s).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
    }
    println!("report: plot data written to {}", plots_dir.display());
    Ok(())
}
