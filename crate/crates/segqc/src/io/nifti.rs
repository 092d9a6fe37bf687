//! Minimal NIfTI-1 reading and writing.
//!
//! Covers exactly what the pipeline emits: single-file `.nii` / `.nii.gz`,
//! little-endian, dtypes u8 / i16 / i32 / f32 / f64, 3D or 4D, identity-ish
//! affine derived from voxel spacing (sform diagonal). Array axes are
//! `(D, H, W)` with W fastest; they map to NIfTI `(x=W, y=H, z=D)`, and a 4D
//! channel axis maps to NIfTI's t dimension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use ndarray::{Array3, Array4};

use crate::error::{Result, SegQcError};
use crate::hierarchy::ClassHierarchy;
use crate::mask::LabelMask;
use crate::volume::Volume;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: f32 = 352.0;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SegQcError + '_ {
    move |e| SegQcError::io(path.display().to_string(), e)
}

struct Header {
    /// dims as stored: [ndim, nx, ny, nz, nt, ...]
    dim: [u16; 8],
    datatype: i16,
    /// voxel sizes, same order as dim
    pixdim: [f32; 8],
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> std::io::Result<()> {
    w.write_i32::<LittleEndian>(HEADER_SIZE as i32)?; // sizeof_hdr
    w.write_all(&[0u8; 35])?; // data_type, db_name, extents, session_error, regular
    w.write_u8(0)?; // dim_info
    for d in h.dim {
        w.write_u16::<LittleEndian>(d)?;
    }
    for _ in 0..3 {
        w.write_f32::<LittleEndian>(0.0)?; // intent_p1..p3
    }
    w.write_i16::<LittleEndian>(0)?; // intent_code
    w.write_i16::<LittleEndian>(h.datatype)?;
    w.write_i16::<LittleEndian>(bitpix(h.datatype))?;
    w.write_i16::<LittleEndian>(0)?; // slice_start
    for p in h.pixdim {
        w.write_f32::<LittleEndian>(p)?;
    }
    w.write_f32::<LittleEndian>(VOX_OFFSET)?;
    w.write_f32::<LittleEndian>(1.0)?; // scl_slope
    w.write_f32::<LittleEndian>(0.0)?; // scl_inter
    w.write_i16::<LittleEndian>(0)?; // slice_end
    w.write_u8(0)?; // slice_code
    w.write_u8(2)?; // xyzt_units: mm
    w.write_f32::<LittleEndian>(0.0)?; // cal_max
    w.write_f32::<LittleEndian>(0.0)?; // cal_min
    w.write_f32::<LittleEndian>(0.0)?; // slice_duration
    w.write_f32::<LittleEndian>(0.0)?; // toffset
    w.write_i32::<LittleEndian>(0)?; // glmax
    w.write_i32::<LittleEndian>(0)?; // glmin
    w.write_all(&[0u8; 80])?; // descrip
    w.write_all(&[0u8; 24])?; // aux_file
    w.write_i16::<LittleEndian>(0)?; // qform_code
    w.write_i16::<LittleEndian>(1)?; // sform_code
    for _ in 0..6 {
        w.write_f32::<LittleEndian>(0.0)?; // quatern b,c,d + qoffset x,y,z
    }
    // srow: diagonal spacing affine
    let (sx, sy, sz) = (h.pixdim[1], h.pixdim[2], h.pixdim[3]);
    let srow: [[f32; 4]; 3] =
        [[sx, 0.0, 0.0, 0.0], [0.0, sy, 0.0, 0.0], [0.0, 0.0, sz, 0.0]];
    for row in srow {
        for v in row {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.write_all(&[0u8; 16])?; // intent_name
    w.write_all(b"n+1\0")?; // magic
    w.write_all(&[0u8; 4])?; // extension flag
    Ok(())
}

fn bitpix(datatype: i16) -> i16 {
    match datatype {
        DT_UINT8 => 8,
        DT_INT16 => 16,
        DT_INT32 | DT_FLOAT32 => 32,
        DT_FLOAT64 => 64,
        _ => 0,
    }
}

fn read_header<R: Read>(r: &mut R, path: &Path) -> Result<Header> {
    let mut buf = vec![0u8; HEADER_SIZE + 4];
    r.read_exact(&mut buf).map_err(io_err(path))?;
    let sizeof_hdr = i32::from_le_bytes(buf[0..4].try_into().unwrap());
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(SegQcError::Data(format!(
            "{}: not little-endian NIfTI-1 (sizeof_hdr = {sizeof_hdr})",
            path.display()
        )));
    }
    if &buf[344..347] != b"n+1" {
        return Err(SegQcError::Data(format!("{}: unsupported NIfTI magic", path.display())));
    }
    let mut dim = [0u16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = u16::from_le_bytes(buf[40 + 2 * i..42 + 2 * i].try_into().unwrap());
    }
    let datatype = i16::from_le_bytes(buf[70..72].try_into().unwrap());
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = f32::from_le_bytes(buf[76 + 4 * i..80 + 4 * i].try_into().unwrap());
    }
    let vox_offset = f32::from_le_bytes(buf[108..112].try_into().unwrap());
    let scl_slope = f32::from_le_bytes(buf[112..116].try_into().unwrap());
    let scl_inter = f32::from_le_bytes(buf[116..120].try_into().unwrap());
    if scl_inter != 0.0 || (scl_slope != 0.0 && scl_slope != 1.0) {
        return Err(SegQcError::Data(format!(
            "{}: scaled NIfTI data (slope {scl_slope}, inter {scl_inter}) is not supported",
            path.display()
        )));
    }
    // Skip any remaining bytes up to the data offset.
    let skip = vox_offset as usize - (HEADER_SIZE + 4);
    if skip > 0 {
        std::io::copy(&mut r.take(skip as u64), &mut std::io::sink()).map_err(io_err(path))?;
    }
    Ok(Header { dim, datatype, pixdim })
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut br = BufReader::new(f);
    let mut magic = [0u8; 2];
    br.read_exact(&mut magic).map_err(io_err(path))?;
    // Reopen; gzip sniffing consumed two bytes.
    let f = File::open(path).map_err(io_err(path))?;
    let br = BufReader::new(f);
    if magic == [0x1f, 0x8b] {
        Ok(Box::new(MultiGzDecoder::new(br)))
    } else {
        Ok(Box::new(br))
    }
}

fn make_writer(path: &Path) -> Result<Box<dyn Write>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let f = File::create(path).map_err(io_err(path))?;
    let bw = BufWriter::new(f);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzEncoder::new(bw, flate2::Compression::fast())))
    } else {
        Ok(Box::new(bw))
    }
}

fn read_voxels(r: &mut impl Read, datatype: i16, n: usize, path: &Path) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(n);
    match datatype {
        DT_UINT8 => {
            let mut b = vec![0u8; n];
            r.read_exact(&mut b).map_err(io_err(path))?;
            out.extend(b.into_iter().map(|v| v as f32));
        }
        DT_INT16 => {
            for _ in 0..n {
                out.push(r.read_i16::<LittleEndian>().map_err(io_err(path))? as f32);
            }
        }
        DT_INT32 => {
            for _ in 0..n {
                out.push(r.read_i32::<LittleEndian>().map_err(io_err(path))? as f32);
            }
        }
        DT_FLOAT32 => {
            for _ in 0..n {
                out.push(r.read_f32::<LittleEndian>().map_err(io_err(path))?);
            }
        }
        DT_FLOAT64 => {
            for _ in 0..n {
                out.push(r.read_f64::<LittleEndian>().map_err(io_err(path))? as f32);
            }
        }
        other => {
            return Err(SegQcError::Data(format!(
                "{}: unsupported NIfTI datatype {other}",
                path.display()
            )))
        }
    }
    Ok(out)
}

/// Writes a multi-modality volume; the channel axis becomes NIfTI's t axis.
pub fn write_volume(path: &Path, volume: &Volume) -> Result<()> {
    let [d, h, w] = volume.spatial_shape();
    let m = volume.num_modalities();
    let sp = volume.spacing();
    let header = Header {
        dim: [4, w as u16, h as u16, d as u16, m as u16, 1, 1, 1],
        datatype: DT_FLOAT32,
        pixdim: [0.0, sp[2] as f32, sp[1] as f32, sp[0] as f32, 1.0, 0.0, 0.0, 0.0],
    };
    let mut wtr = make_writer(path)?;
    write_header(&mut wtr, &header).map_err(io_err(path))?;
    for &v in volume.data().as_slice().expect("contiguous volume") {
        wtr.write_f32::<LittleEndian>(v).map_err(io_err(path))?;
    }
    Ok(())
}

/// Reads a 3D or 4D floating-point volume.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let mut r = open_reader(path)?;
    let h = read_header(&mut r, path)?;
    let (w, hh, d) = (h.dim[1] as usize, h.dim[2] as usize, h.dim[3] as usize);
    let m = if h.dim[0] >= 4 { (h.dim[4] as usize).max(1) } else { 1 };
    let data = read_voxels(&mut r, h.datatype, m * d * hh * w, path)?;
    let arr = Array4::from_shape_vec((m, d, hh, w), data).expect("exact size");
    Volume::new(
        arr,
        [h.pixdim[3] as f64, h.pixdim[2] as f64, h.pixdim[1] as f64],
        (0..m).map(|i| format!("M{}", i + 1)).collect(),
    )
}

/// Writes an integer label mask as uint8.
pub fn write_labels(path: &Path, mask: &LabelMask, spacing: [f64; 3]) -> Result<()> {
    let [d, h, w] = mask.shape();
    let header = Header {
        dim: [3, w as u16, h as u16, d as u16, 1, 1, 1, 1],
        datatype: DT_UINT8,
        pixdim: [0.0, spacing[2] as f32, spacing[1] as f32, spacing[0] as f32, 1.0, 0.0, 0.0, 0.0],
    };
    let mut wtr = make_writer(path)?;
    write_header(&mut wtr, &header).map_err(io_err(path))?;
    wtr.write_all(mask.data().as_slice().expect("contiguous mask")).map_err(io_err(path))?;
    Ok(())
}

/// Reads an integer label mask and validates it against `hierarchy`.
pub fn read_labels(path: &Path, hierarchy: ClassHierarchy) -> Result<LabelMask> {
    let mut r = open_reader(path)?;
    let h = read_header(&mut r, path)?;
    let (w, hh, d) = (h.dim[1] as usize, h.dim[2] as usize, h.dim[3] as usize);
    let data = read_voxels(&mut r, h.datatype, d * hh * w, path)?;
    let mut labels = Vec::with_capacity(data.len());
    for v in data {
        if v < 0.0 || v > 255.0 || v.fract() != 0.0 {
            return Err(SegQcError::Data(format!(
                "{}: voxel value {v} is not an integer label",
                path.display()
            )));
        }
        labels.push(v as u8);
    }
    LabelMask::new(Array3::from_shape_vec((d, hh, w), labels).expect("exact size"), hierarchy)
}

/// Writes a (C, D, H, W) stack (error maps, probability maps) as a 4D float
/// volume with C on the t axis.
pub fn write_stack(path: &Path, stack: &Array4<f32>, spacing: [f64; 3]) -> Result<()> {
    let (c, d, h, w) = stack.dim();
    let header = Header {
        dim: [4, w as u16, h as u16, d as u16, c as u16, 1, 1, 1],
        datatype: DT_FLOAT32,
        pixdim: [0.0, spacing[2] as f32, spacing[1] as f32, spacing[0] as f32, 1.0, 0.0, 0.0, 0.0],
    };
    let mut wtr = make_writer(path)?;
    write_header(&mut wtr, &header).map_err(io_err(path))?;
    for &v in stack.as_slice().expect("contiguous stack") {
        wtr.write_f32::<LittleEndian>(v).map_err(io_err(path))?;
    }
    Ok(())
}

/// Reads a (C, D, H, W) float stack written by [`write_stack`].
pub fn read_stack(path: &Path) -> Result<(Array4<f32>, [f64; 3])> {
    let mut r = open_reader(path)?;
    let h = read_header(&mut r, path)?;
    let (w, hh, d) = (h.dim[1] as usize, h.dim[2] as usize, h.dim[3] as usize);
    let c = if h.dim[0] >= 4 { (h.dim[4] as usize).max(1) } else { 1 };
    let data = read_voxels(&mut r, h.datatype, c * d * hh * w, path)?;
    Ok((
        Array4::from_shape_vec((c, d, hh, w), data).expect("exact size"),
        [h.pixdim[3] as f64, h.pixdim[2] as f64, h.pixdim[1] as f64],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn volume_round_trip_gz_and_plain() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::new(
            Array4::from_shape_fn((2, 3, 4, 5), |(m, z, y, x)| {
                (m * 1000 + z * 100 + y * 10 + x) as f32 * 0.1
            }),
            [2.0, 1.0, 0.5],
            vec!["T1".into(), "T2".into()],
        )
        .unwrap();
        for name in ["vol.nii", "vol.nii.gz"] {
            let p = dir.path().join(name);
            write_volume(&p, &v).unwrap();
            let back = read_volume(&p).unwrap();
            assert_eq!(back.data(), v.data());
            assert_eq!(back.spacing(), v.spacing());
        }
    }

    #[test]
    fn labels_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let h = ClassHierarchy::brats();
        let mut a = Array3::<u8>::zeros((4, 4, 4));
        a[[1, 2, 3]] = 4;
        a[[0, 0, 0]] = 2;
        let m = LabelMask::new(a, h.clone()).unwrap();
        let p = dir.path().join("mask.nii.gz");
        write_labels(&p, &m, [1.0; 3]).unwrap();
        let back = read_labels(&p, h.clone()).unwrap();
        assert_eq!(back.data(), m.data());

        // A mask with labels outside the hierarchy is rejected on read.
        let bad_hierarchy = ClassHierarchy::cardiac();
        assert!(read_labels(&p, bad_hierarchy).is_err());
    }

    #[test]
    fn stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = Array4::from_shape_fn((3, 2, 2, 2), |(c, z, y, x)| {
            c as f32 + 0.1 * (z + y + x) as f32
        });
        let p = dir.path().join("sem.nii.gz");
        write_stack(&p, &s, [1.0; 3]).unwrap();
        let (back, spacing) = read_stack(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(spacing, [1.0; 3]);
    }
}
