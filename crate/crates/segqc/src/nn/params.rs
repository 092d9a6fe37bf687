//! Named parameter storage with a flat binary serialization.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};

use super::{Scalar, Value};
use crate::error::{Result, SegQcError};

/// Ordered collection of named parameter tensors. Registration order defines
/// the slot index used for gradient collection and serialization, so model
/// construction must be deterministic.
pub struct ParamSet<F> {
    names: Vec<String>,
    tensors: Vec<Value<F>>,
}

impl<F: Scalar> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamSet<F> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: ArrayD<F>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor.into_shared());
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn tensor(&self, slot: usize) -> &Value<F> {
        &self.tensors[slot]
    }

    pub fn tensors(&self) -> &[Value<F>] {
        &self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn update(&mut self, slot: usize, new: ArrayD<F>) {
        debug_assert_eq!(new.shape(), self.tensors[slot].shape());
        self.tensors[slot] = new.into_shared();
    }

    /// Serializes all tensors as little-endian f32 (the training precision).
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        let io_err = |e| SegQcError::io("<weights blob>", e);
        w.write_all(b"SQCW").map_err(io_err)?;
        w.write_u32::<LittleEndian>(1).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.tensors.len() as u32).map_err(io_err)?;
        for (name, t) in self.names.iter().zip(self.tensors.iter()) {
            let nb = name.as_bytes();
            w.write_u32::<LittleEndian>(nb.len() as u32).map_err(io_err)?;
            w.write_all(nb).map_err(io_err)?;
            w.write_u32::<LittleEndian>(t.ndim() as u32).map_err(io_err)?;
            for &d in t.shape() {
                w.write_u64::<LittleEndian>(d as u64).map_err(io_err)?;
            }
            for &v in t.iter() {
                w.write_f32::<LittleEndian>(v.to_f64() as f32).map_err(io_err)?;
            }
        }
        Ok(())
    }

    /// Loads a blob written by [`ParamSet::save`]; tensor names and shapes
    /// must match this set exactly.
    pub fn load(&mut self, r: &mut impl Read) -> Result<()> {
        let io_err = |e| SegQcError::io("<weights blob>", e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != b"SQCW" {
            return Err(SegQcError::CheckpointMismatch("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
        if version != 1 {
            return Err(SegQcError::CheckpointMismatch(format!("unsupported version {version}")));
        }
        let count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        if count != self.tensors.len() {
            return Err(SegQcError::CheckpointMismatch(format!(
                "blob has {count} tensors, model has {}",
                self.tensors.len()
            )));
        }
        for slot in 0..count {
            let nlen = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
            let mut nb = vec![0u8; nlen];
            r.read_exact(&mut nb).map_err(io_err)?;
            let name = String::from_utf8_lossy(&nb).into_owned();
            if name != self.names[slot] {
                return Err(SegQcError::CheckpointMismatch(format!(
                    "tensor {slot} is '{name}', expected '{}'",
                    self.names[slot]
                )));
            }
            let ndim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.read_u64::<LittleEndian>().map_err(io_err)? as usize);
            }
            if shape != self.tensors[slot].shape() {
                return Err(SegQcError::CheckpointMismatch(format!(
                    "tensor '{name}' shape {:?} != expected {:?}",
                    shape,
                    self.tensors[slot].shape()
                )));
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(F::from_f64(r.read_f32::<LittleEndian>().map_err(io_err)? as f64));
            }
            self.tensors[slot] =
                ArrayD::from_shape_vec(IxDyn(&shape), data).expect("validated shape").into_shared();
        }
        Ok(())
    }
}
