//! Checkpoints: an opaque weights blob next to a `config.json` sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::QcResUNetConfig;
use super::net::QcResUNet;
use crate::error::{Result, SegQcError};

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointSidecar {
    schema_version: u32,
    config: QcResUNetConfig,
}

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CONFIG_FILE: &str = "config.json";

/// Writes `weights.bin` + `config.json` into `dir` (created if needed).
pub fn save_checkpoint(model: &QcResUNet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SegQcError::io(dir.display().to_string(), e))?;
    let sidecar =
        CheckpointSidecar { schema_version: 1, config: model.config().clone() };
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, serde_json::to_string_pretty(&sidecar)?)
        .map_err(|e| SegQcError::io(cfg_path.display().to_string(), e))?;
    let w_path = dir.join(WEIGHTS_FILE);
    let mut buf = Vec::new();
    model.params().save(&mut buf)?;
    fs::write(&w_path, buf).map_err(|e| SegQcError::io(w_path.display().to_string(), e))?;
    Ok(())
}

/// Reads a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<QcResUNet> {
    let cfg_path = dir.join(CONFIG_FILE);
    let raw = fs::read_to_string(&cfg_path)
        .map_err(|e| SegQcError::io(cfg_path.display().to_string(), e))?;
    let sidecar: CheckpointSidecar = serde_json::from_str(&raw)?;
    if sidecar.schema_version != 1 {
        return Err(SegQcError::CheckpointMismatch(format!(
            "unsupported checkpoint schema {}",
            sidecar.schema_version
        )));
    }
    let mut model = QcResUNet::new(sidecar.config, 0)?;
    let w_path = dir.join(WEIGHTS_FILE);
    let bytes =
        fs::read(&w_path).map_err(|e| SegQcError::io(w_path.display().to_string(), e))?;
    model.params_mut().load(&mut bytes.as_slice())?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ClassHierarchy;
    use crate::mask::LabelMask;
    use crate::volume::Volume;
    use ndarray::{Array3, Array4};

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let cfg = QcResUNetConfig::brain(1, 3, 2);
        let model = QcResUNet::new(cfg, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();

        let v = Volume::new(
            Array4::from_shape_fn((1, 16, 16, 16), |(_, z, y, x)| {
                ((z + 2 * y + 3 * x) % 7) as f32 / 7.0
            }),
            [1.0; 3],
            vec!["M1".into()],
        )
        .unwrap();
        let mut m = Array3::<u8>::zeros((16, 16, 16));
        m[[8, 8, 8]] = 4;
        let q = LabelMask::new(m, ClassHierarchy::brats()).unwrap();
        let a = model.predict(&v, &q).unwrap();
        let b = loaded.predict(&v, &q).unwrap();
        assert_eq!(a.dsc_pred, b.dsc_pred);
        assert_eq!(a.nsd_pred, b.nsd_pred);
        assert_eq!(a.sem_prob, b.sem_prob);
    }
}
