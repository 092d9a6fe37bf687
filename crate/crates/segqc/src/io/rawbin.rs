//! Dependency-free fallback format: little-endian tensor + JSON sidecar.
//!
//! `<name>.bin` holds the raw little-endian scalars; `<name>.json` records
//! `{dtype, shape, spacing}`.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};

#[derive(Debug, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub spacing: [f64; 3],
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_raw_f32(path: &Path, data: &ArrayD<f32>, spacing: [f64; 3]) -> Result<()> {
    let io_err = |e| SegQcError::io(path.display().to_string(), e);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for &v in data.iter() {
        buf.write_f32::<LittleEndian>(v).map_err(io_err)?;
    }
    fs::write(path, buf).map_err(io_err)?;
    let sidecar = RawSidecar {
        dtype: "f32".into(),
        shape: data.shape().to_vec(),
        spacing,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?).map_err(io_err)?;
    Ok(())
}

pub fn read_raw_f32(path: &Path) -> Result<(ArrayD<f32>, [f64; 3])> {
    let io_err = |e| SegQcError::io(path.display().to_string(), e);
    let sc: RawSidecar = serde_json::from_str(
        &fs::read_to_string(sidecar_path(path)).map_err(io_err)?,
    )?;
    if sc.dtype != "f32" {
        return Err(SegQcError::Data(format!("raw dtype {} is not f32", sc.dtype)));
    }
    let bytes = fs::read(path).map_err(io_err)?;
    let n: usize = sc.shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(SegQcError::Data(format!(
            "raw payload is {} bytes, shape {:?} needs {}",
            bytes.len(),
            sc.shape,
            n * 4
        )));
    }
    let mut rd = bytes.as_slice();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(rd.read_f32::<LittleEndian>().map_err(io_err)?);
    }
    Ok((ArrayD::from_shape_vec(IxDyn(&sc.shape), data).expect("validated size"), sc.spacing))
}
