//! Operator command-line surface.
//!
//! Every generation command requires an explicit `--seed` and is idempotent
//! given identical inputs and seeds. Failures print a machine-readable JSON
//! object on stderr and exit with 2 (bad config), 3 (data error), or
//! 4 (numerical failure).

mod commands;
mod ue_pipeline;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::error::SegQcError;

#[derive(Parser)]
#[command(
    name = "segqc",
    about = "Segmentation quality control: dataset synthesis, training, evaluation, prediction",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Data-parallel case processing (generation/evaluation commands).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
pub struct HierarchyArg {
    /// Class hierarchy: "brats", "cardiac", or a path to a hierarchy JSON.
    #[arg(long, default_value = "brats")]
    hierarchy: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset with ground-truth masks.
    Synth {
        /// Phantom specification JSON; omit for the built-in brain preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Grid edge of the built-in preset (ignored when --spec is given).
        #[arg(long, default_value_t = 32)]
        grid: usize,
    },
    /// Produce quality-diverse query segmentations for every case.
    Degrade {
        #[arg(long)]
        dataset: PathBuf,
        /// SegGen parameter JSON; omit for the published defaults.
        #[arg(long)]
        seggen: Option<PathBuf>,
        /// CSV list of proxy-training epochs to snapshot (e.g. "0,2,6").
        #[arg(long)]
        snapshots: Option<String>,
        /// Learning rate of the snapshot training run.
        #[arg(long, default_value_t = crate::datagen::SNAPSHOT_LR)]
        snapshot_lr: f64,
        /// Severity multipliers; each runs `applications_per_gt` degradations.
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        severities: Vec<f64>,
        #[arg(long)]
        seed: u64,
    },
    /// Build a balanced quality index over the dataset's segmentations.
    Balance {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// "eval" freezes a deterministic index; "train" stores redrawable pools.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to the case ids listed in this file (one per line).
        #[arg(long)]
        cases_file: Option<PathBuf>,
    },
    /// Train the quality-control network.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Training index (mode = train).
        #[arg(long)]
        index: PathBuf,
        /// Validation index (mode = eval) for best-epoch selection.
        #[arg(long)]
        val_index: Option<PathBuf>,
        /// Training configuration JSON; omit for defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Loss configuration JSON; omit for defaults.
        #[arg(long)]
        loss: Option<PathBuf>,
        /// Model configuration JSON; omit to derive from the dataset.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Downsampling preset when no model JSON is given.
        #[arg(long, default_value = "brain")]
        arch: String,
        #[arg(long, default_value_t = 16)]
        base_filters: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate checkpoints over a deterministic index.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// One or more checkpoint directories (ensembled).
        #[arg(long, required = true, num_args = 1..)]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict quality scores and an error map for one image/mask pair.
    Predict {
        /// One or more checkpoint directories (ensembled).
        #[arg(long, num_args = 0..)]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Bypass the model: compute exact metrics against this reference.
        #[arg(long)]
        oracle_gt: Option<PathBuf>,
        #[command(flatten)]
        hierarchy: HierarchyArg,
    },
    /// Calibrate uncertainty thresholds and extract baseline features.
    UeCalibrate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Monte-Carlo dropout passes per snapshot.
        #[arg(long, default_value_t = 50)]
        passes: usize,
        /// Proxy-training epochs whose states produce uncertainty samples.
        #[arg(long, default_value = "0,2,5,9")]
        snapshots: String,
        #[arg(long, default_value_t = 5e-3)]
        proxy_lr: f64,
        /// "distance" (1 - |2p - 1|) or "literal" (threshold p directly).
        #[arg(long, default_value = "distance")]
        score_mode: String,
        /// Fraction of cases used for threshold calibration.
        #[arg(long, default_value_t = 0.5)]
        calibration_fraction: f64,
    },
    /// Fit the baseline regressor on extracted features and report metrics.
    UeEval {
        /// Directory produced by ue-calibrate.
        #[arg(long)]
        ue: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Fraction of cases used for regressor training.
        #[arg(long, default_value_t = 0.6)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Grad-CAM heatmap for one prediction.
    Explain {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// "dsc" or "nsd".
        #[arg(long, default_value = "dsc")]
        target: String,
        /// "block4" (default) or "block3".
        #[arg(long, default_value = "block4")]
        layer: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hierarchy: HierarchyArg,
    },
    /// Emit plot-ready scatter/histogram data from an evaluation report.
    Report {
        /// Report directory produced by `eval`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Write histogram/scatter data files under <in>/plots/.
        #[arg(long, default_value_t = true)]
        plots: bool,
    },
}

/// Entry point used by the `segqc` binary; returns the process exit code.
pub fn cli_main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let payload = serde_json::json!({
                "error": e.to_string(),
                "code": e.exit_code(),
            });
            eprintln!("{payload}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), SegQcError> {
    let workers = cli.workers.max(1);
    match cli.command {
        Command::Synth { spec, out, count, seed, grid } => {
            commands::synth(spec.as_deref(), &out, count, seed, grid, workers)
        }
        Command::Degrade { dataset, seggen, snapshots, snapshot_lr, severities, seed } => {
            commands::degrade(
                &dataset,
                seggen.as_deref(),
                snapshots.as_deref(),
                snapshot_lr,
                &severities,
                seed,
                workers,
            )
        }
        Command::Balance { dataset, bins, mode, seed, out, cases_file } => {
            commands::balance(&dataset, bins, &mode, seed, &out, cases_file.as_deref())
        }
        Command::Train {
            dataset,
            index,
            val_index,
            config,
            loss,
            model,
            arch,
            base_filters,
            seed,
            out,
        } => commands::train(
            &dataset,
            &index,
            val_index.as_deref(),
            config.as_deref(),
            loss.as_deref(),
            model.as_deref(),
            &arch,
            base_filters,
            seed,
            &out,
        ),
        Command::Eval { dataset, index, ckpt, out } => {
            commands::eval(&dataset, &index, &ckpt, &out)
        }
        Command::Predict { ckpt, image, mask, out, oracle_gt, hierarchy } => {
            commands::predict(&ckpt, &image, &mask, &out, oracle_gt.as_deref(), &hierarchy.hierarchy)
        }
        Command::UeCalibrate {
            dataset,
            out,
            seed,
            passes,
            snapshots,
            proxy_lr,
            score_mode,
            calibration_fraction,
        } => ue_pipeline::ue_calibrate(
            &dataset,
            &out,
            seed,
            passes,
            &snapshots,
            proxy_lr,
            &score_mode,
            calibration_fraction,
        ),
        Command::UeEval { ue, seed, train_fraction, out } => {
            ue_pipeline::ue_eval(&ue, seed, train_fraction, &out)
        }
        Command::Explain { ckpt, image, mask, target, layer, out, hierarchy } => {
            commands::explain(&ckpt, &image, &mask, &target, &layer, &out, &hierarchy.hierarchy)
        }
        Command::Report { input, plots } => commands::report(&input, plots),
    }
}

pub(crate) fn parse_hierarchy(spec: &str) -> Result<crate::hierarchy::ClassHierarchy, SegQcError> {
    match spec {
        "brats" => Ok(crate::hierarchy::ClassHierarchy::brats()),
        "cardiac" => Ok(crate::hierarchy::ClassHierarchy::cardiac()),
        path => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| SegQcError::io(path.to_string(), e))?;
            Ok(serde_json::from_str(&raw)?)
        }
    }
}
