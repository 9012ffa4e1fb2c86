//! Minimal NIfTI-1 reader/writer (single-file `.nii`, optionally gzipped).
//!
//! Only little-endian, axis-aligned 3D volumes with uint8, int16, int32 or
//! float32 payloads are handled. Non-diagonal orientation matrices are
//! logged as warnings and otherwise ignored.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{ImageVolume, LabelVolume, Volume};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

/// On-disk voxel type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Uint8,
    Int16,
    Int32,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Int32 => 8,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DataType::Uint8,
            4 => DataType::Int16,
            8 => DataType::Int32,
            16 => DataType::Float32,
            other => {
                return Err(Error::Capability(format!(
                    "NIfTI datatype code {other} is not supported"
                )))
            }
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Int32 | DataType::Float32 => 4,
        }
    }

    fn range(self) -> Option<(f64, f64)> {
        match self {
            DataType::Uint8 => Some((0.0, 255.0)),
            DataType::Int16 => Some((i16::MIN as f64, i16::MAX as f64)),
            DataType::Int32 => Some((i32::MIN as f64, i32::MAX as f64)),
            DataType::Float32 => None,
        }
    }
}

/// A decoded NIfTI file: scaled voxel values plus the stored datatype.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiFile {
    pub datatype: DataType,
    pub volume: Volume<f64>,
}

impl NiftiFile {
    pub fn into_image(self) -> ImageVolume {
        self.volume.map(|&v| v as f32)
    }

    /// Fails if any voxel is negative, fractional or above `u16::MAX`.
    pub fn into_labels(self) -> Result<LabelVolume> {
        if let Some(bad) = self
            .volume
            .voxels()
            .iter()
            .find(|v| !(v.fract() == 0.0 && **v >= 0.0 && **v <= u16::MAX as f64))
        {
            return Err(Error::format(format!("label volume contains non-label value {bad}")));
        }
        Ok(self.volume.map(|&v| v as u16))
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiFile> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    decode(&bytes, path)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageVolume> {
    Ok(read_nifti(path)?.into_image())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    read_nifti(path)?.into_labels()
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("truncated NIfTI {what}")),
    )
}

fn decode(bytes: &[u8], path: &Path) -> Result<NiftiFile> {
    if bytes.len() < HEADER_SIZE {
        return Err(truncated(path, "header"));
    }
    let h = &bytes[..HEADER_SIZE];
    if LittleEndian::read_i32(&h[0..4]) != HEADER_SIZE as i32 {
        if BigEndian::read_i32(&h[0..4]) == HEADER_SIZE as i32 {
            return Err(Error::Capability("big-endian NIfTI files are not supported".into()));
        }
        return Err(Error::format(format!("{}: sizeof_hdr is not 348", path.display())));
    }
    let magic = &h[344..348];
    if magic == MAGIC_PAIR {
        return Err(Error::Capability(
            "split .hdr/.img NIfTI pairs are not supported".into(),
        ));
    }
    if magic != MAGIC {
        return Err(Error::format(format!("{}: missing NIfTI-1 magic", path.display())));
    }

    let mut dim = [0i16; 8];
    LittleEndian::read_i16_into(&h[40..56], &mut dim);
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::format(format!("dim[0] = {ndim} out of range")));
    }
    let mut dims = [1usize; 3];
    for axis in 1..=ndim as usize {
        let d = dim[axis];
        if d < 1 {
            return Err(Error::format(format!("dim[{axis}] = {d} must be >= 1")));
        }
        if axis <= 3 {
            dims[axis - 1] = d as usize;
        } else if d > 1 {
            return Err(Error::Capability(format!("{ndim}D volumes are not supported")));
        }
    }

    let datatype = DataType::from_code(LittleEndian::read_i16(&h[70..72]))?;
    let mut pixdim = [0f32; 8];
    LittleEndian::read_f32_into(&h[76..108], &mut pixdim);
    let spacing = [1, 2, 3].map(|i| f64::from(pixdim[i]).abs());
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::format(format!("non-positive pixdim {:?}", &pixdim[1..4])));
    }
    let vox_offset = LittleEndian::read_f32(&h[108..112]);
    if vox_offset.is_nan() || vox_offset < HEADER_SIZE as f32 {
        return Err(Error::format(format!("vox_offset {vox_offset} lies inside the header")));
    }
    let slope = f64::from(LittleEndian::read_f32(&h[112..116]));
    let inter = f64::from(LittleEndian::read_f32(&h[116..120]));
    let origin = read_origin(h);

    let n: usize = dims.iter().product();
    let start = vox_offset as usize;
    let end = start + n * datatype.bytes();
    if bytes.len() < end {
        return Err(truncated(path, "payload"));
    }
    let payload = &bytes[start..end];
    let mut values: Vec<f64> = match datatype {
        DataType::Uint8 => payload.iter().map(|&b| f64::from(b)).collect(),
        DataType::Int16 => payload
            .chunks_exact(2)
            .map(|c| f64::from(LittleEndian::read_i16(c)))
            .collect(),
        DataType::Int32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(LittleEndian::read_i32(c)))
            .collect(),
        DataType::Float32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(LittleEndian::read_f32(c)))
            .collect(),
    };
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && !(slope == 1.0 && inter == 0.0) {
        values.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    Ok(NiftiFile {
        datatype,
        volume: Volume::new(dims, spacing, origin, values)?,
    })
}

fn read_origin(h: &[u8]) -> [f64; 3] {
    let qform_code = LittleEndian::read_i16(&h[252..254]);
    let sform_code = LittleEndian::read_i16(&h[254..256]);
    if sform_code > 0 {
        let mut rows = [[0f32; 4]; 3];
        for (r, row) in rows.iter_mut().enumerate() {
            LittleEndian::read_f32_into(&h[280 + 16 * r..296 + 16 * r], row);
        }
        let oblique = (0..3).any(|r| (0..3).any(|c| (r != c && rows[r][c] != 0.0) || (r == c && rows[r][c] < 0.0)));
        if oblique {
            log::warn!("sform is not a positive diagonal; orientation is ignored");
        }
        return [0, 1, 2].map(|r| f64::from(rows[r][3]));
    }
    if qform_code > 0 {
        let quat = [256, 260, 264].map(|o| LittleEndian::read_f32(&h[o..o + 4]));
        if quat.iter().any(|q| *q != 0.0) {
            log::warn!("qform is rotated; orientation is ignored");
        }
        return [268, 272, 276].map(|o| f64::from(LittleEndian::read_f32(&h[o..o + 4])));
    }
    [0.0; 3]
}

/// Encode `file` with its declared datatype. Integer datatypes require
/// integral, in-range values.
pub fn encode(file: &NiftiFile) -> Result<Vec<u8>> {
    let vol = &file.volume;
    let dims = vol.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::argument(format!("dims {dims:?} exceed the NIfTI-1 limit")));
    }
    if let Some((lo, hi)) = file.datatype.range() {
        if let Some(bad) = vol
            .voxels()
            .iter()
            .find(|v| !(v.fract() == 0.0 && **v >= lo && **v <= hi))
        {
            return Err(Error::argument(format!(
                "value {bad} is not representable as {:?}",
                file.datatype
            )));
        }
    }

    let mut h = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    LittleEndian::write_i16_into(&dim, &mut h[40..56]);
    LittleEndian::write_i16(&mut h[70..72], file.datatype.code());
    LittleEndian::write_i16(&mut h[72..74], (file.datatype.bytes() * 8) as i16);
    let s = vol.spacing();
    let pixdim: [f32; 8] = [1.0, s[0] as f32, s[1] as f32, s[2] as f32, 1.0, 1.0, 1.0, 1.0];
    LittleEndian::write_f32_into(&pixdim, &mut h[76..108]);
    LittleEndian::write_f32(&mut h[108..112], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[112..116], 1.0);
    LittleEndian::write_f32(&mut h[116..120], 0.0);
    h[123] = 2; // mm
    LittleEndian::write_i16(&mut h[254..256], 1);
    let o = vol.origin();
    for r in 0..3 {
        let mut row = [0f32; 4];
        row[r] = s[r] as f32;
        row[3] = o[r] as f32;
        LittleEndian::write_f32_into(&row, &mut h[280 + 16 * r..296 + 16 * r]);
    }
    h[344..348].copy_from_slice(MAGIC);

    let mut out = h;
    out.reserve(vol.len() * file.datatype.bytes());
    for &v in vol.voxels() {
        match file.datatype {
            DataType::Uint8 => out.push(v as u8),
            DataType::Int16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            DataType::Int32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            DataType::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Write a NIfTI file; gzipped when the path ends in `.gz`.
pub fn write_nifti(path: impl AsRef<Path>, file: &NiftiFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(file)?;
    let io = |e| Error::io(path, e);
    let f = File::create(path).map_err(io)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(BufWriter::new(f), Compression::default());
        enc.write_all(&bytes).map_err(io)?;
        enc.finish().map_err(io)?.flush().map_err(io)?;
    } else {
        let mut w = BufWriter::new(f);
        w.write_all(&bytes).map_err(io)?;
        w.flush().map_err(io)?;
    }
    Ok(())
}

/// Images are written as float32.
pub fn write_image(path: impl AsRef<Path>, vol: &ImageVolume) -> Result<()> {
    write_nifti(
        path,
        &NiftiFile {
            datatype: DataType::Float32,
            volume: vol.map(|&v| f64::from(v)),
        },
    )
}

/// Label volumes are written as uint8; IDs above 255 are rejected.
pub fn write_labels(path: impl AsRef<Path>, vol: &LabelVolume) -> Result<()> {
    write_nifti(
        path,
        &NiftiFile {
            datatype: DataType::Uint8,
            volume: vol.map(|&v| f64::from(v)),
        },
    )
}
