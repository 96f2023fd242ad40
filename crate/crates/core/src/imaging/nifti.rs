//! Uncompressed NIfTI-1 reader/writer (little-endian, int16 and float32 payloads).

use super::{ImagingError, Result, Volume};
use std::fs;
use std::path::Path;

pub const NIFTI_HEADER_SIZE: usize = 348;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_QFORM_CODE: usize = 252;
const OFF_MAGIC: usize = 344;

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Int16,
    Float32,
}

impl NiftiDatatype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            4 => Ok(NiftiDatatype::Int16),
            16 => Ok(NiftiDatatype::Float32),
            other => Err(ImagingError::UnsupportedDatatype(other as i32)),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiDatatype::Int16 => 2,
            NiftiDatatype::Float32 => 4,
        }
    }
}

/// A parsed NIfTI-1 file that keeps its original header and extension bytes,
/// so writing it back reproduces the input byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiImage {
    header: Vec<u8>,
    extension: Vec<u8>,
    pub datatype: NiftiDatatype,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Stored (unscaled) voxel values, x-fastest.
    pub data: Vec<f64>,
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn put_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(b: &mut [u8], off: usize, v: f32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

impl NiftiImage {
    pub fn parse(bytes: &[u8], pair_payload: Option<&[u8]>) -> Result<Self> {
        if bytes.len() < NIFTI_HEADER_SIZE {
            return Err(ImagingError::BadHeader(format!(
                "header needs {NIFTI_HEADER_SIZE} bytes, file has {}",
                bytes.len()
            )));
        }
        let magic: [u8; 4] = bytes[OFF_MAGIC..OFF_MAGIC + 4].try_into().unwrap();
        let single = match &magic {
            m if m == MAGIC_SINGLE => true,
            m if m == MAGIC_PAIR => false,
            _ => return Err(ImagingError::BadMagic(magic)),
        };
        let sizeof_hdr = i32_at(bytes, 0);
        if sizeof_hdr != NIFTI_HEADER_SIZE as i32 {
            return Err(ImagingError::BadHeader(format!(
                "sizeof_hdr = {sizeof_hdr} (big-endian files are not supported)"
            )));
        }
        let datatype = NiftiDatatype::from_code(i16_at(bytes, OFF_DATATYPE))?;

        let ndim = i16_at(bytes, OFF_DIM);
        if !(3..=7).contains(&ndim) {
            return Err(ImagingError::BadHeader(format!("dim[0] = {ndim}, expected 3")));
        }
        let mut dims = [0usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            let v = i16_at(bytes, OFF_DIM + 2 * (i + 1));
            if v < 1 {
                return Err(ImagingError::BadHeader(format!("dim[{}] = {v}", i + 1)));
            }
            *d = v as usize;
        }
        for i in 4..=ndim as usize {
            if i16_at(bytes, OFF_DIM + 2 * i) > 1 {
                return Err(ImagingError::BadHeader(format!(
                    "{ndim}-D image; only 3 spatial dimensions are supported"
                )));
            }
        }
        let mut spacing = [0f64; 3];
        for (i, s) in spacing.iter_mut().enumerate() {
            *s = f64::from(f32_at(bytes, OFF_PIXDIM + 4 * (i + 1))).abs();
            if *s == 0.0 {
                *s = 1.0;
            }
        }

        let vox_offset = f32_at(bytes, OFF_VOX_OFFSET);
        let (extension, payload) = if single {
            let off = vox_offset as usize;
            if off < NIFTI_HEADER_SIZE || bytes.len() < off {
                return Err(ImagingError::BadHeader(format!("vox_offset = {vox_offset}")));
            }
            (bytes[NIFTI_HEADER_SIZE..off].to_vec(), &bytes[off..])
        } else {
            let img = pair_payload.ok_or_else(|| {
                ImagingError::BadHeader("\"ni1\" header without an .img payload".into())
            })?;
            let off = (vox_offset.max(0.0) as usize).min(img.len());
            (bytes[NIFTI_HEADER_SIZE..].to_vec(), &img[off..])
        };

        let n = dims[0] * dims[1] * dims[2];
        let expected = n * datatype.bytes();
        if payload.len() < expected {
            return Err(ImagingError::TruncatedFile { expected, found: payload.len() });
        }
        let data = match datatype {
            NiftiDatatype::Int16 => payload[..expected]
                .chunks_exact(2)
                .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])))
                .collect(),
            NiftiDatatype::Float32 => payload[..expected]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect(),
        };

        Ok(Self {
            header: bytes[..NIFTI_HEADER_SIZE].to_vec(),
            extension,
            datatype,
            dims,
            spacing,
            data,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() >= NIFTI_HEADER_SIZE && &bytes[OFF_MAGIC..OFF_MAGIC + 4] == MAGIC_PAIR {
            let img = fs::read(path.with_extension("img"))?;
            return Self::parse(&bytes, Some(&img));
        }
        Self::parse(&bytes, None)
    }

    /// A fresh single-file image with a canonical header.
    pub fn from_volume(v: &Volume, datatype: NiftiDatatype) -> Result<Self> {
        for (i, &d) in v.dims.iter().enumerate() {
            if d > i16::MAX as usize {
                return Err(ImagingError::InvalidVolume(format!("dim[{}] = {d} too large", i + 1)));
            }
        }
        if datatype == NiftiDatatype::Int16 {
            if let Some(x) = v
                .voxels
                .iter()
                .find(|&&x| x.fract() != 0.0 || x < i16::MIN as f64 || x > i16::MAX as f64)
            {
                return Err(ImagingError::InvalidVolume(format!("{x} is not representable as int16")));
            }
        }
        let mut h = vec![0u8; NIFTI_HEADER_SIZE];
        h[0..4].copy_from_slice(&(NIFTI_HEADER_SIZE as i32).to_le_bytes());
        h[38] = b'r';
        let dim = [3, v.dims[0] as i16, v.dims[1] as i16, v.dims[2] as i16, 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            put_i16(&mut h, OFF_DIM + 2 * i, *d);
        }
        put_i16(&mut h, OFF_DATATYPE, datatype.code());
        put_i16(&mut h, OFF_BITPIX, (datatype.bytes() * 8) as i16);
        put_f32(&mut h, OFF_PIXDIM, 1.0);
        for i in 0..3 {
            put_f32(&mut h, OFF_PIXDIM + 4 * (i + 1), v.spacing[i] as f32);
        }
        put_f32(&mut h, OFF_VOX_OFFSET, 352.0);
        put_f32(&mut h, OFF_SCL_SLOPE, 1.0);
        put_f32(&mut h, OFF_SCL_INTER, 0.0);
        h[OFF_XYZT_UNITS] = 2; // mm
        let descrip = b"pag-core";
        h[OFF_DESCRIP..OFF_DESCRIP + descrip.len()].copy_from_slice(descrip);
        put_i16(&mut h, OFF_QFORM_CODE, 0);
        h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC_SINGLE);

        Ok(Self {
            header: h,
            extension: vec![0; 4],
            datatype,
            dims: v.dims,
            spacing: v.spacing,
            data: v.voxels.clone(),
        })
    }

    /// Serialises as a single `n+1` file.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.header.clone();
        header[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC_SINGLE);
        let mut extension = self.extension.clone();
        if extension.len() < 4 {
            extension.resize(4, 0);
        }
        let off = NIFTI_HEADER_SIZE + extension.len();
        if f32_at(&header, OFF_VOX_OFFSET) as usize != off {
            put_f32(&mut header, OFF_VOX_OFFSET, off as f32);
        }
        let mut out = Vec::with_capacity(off + self.data.len() * self.datatype.bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&extension);
        match self.datatype {
            NiftiDatatype::Int16 => {
                for &x in &self.data {
                    out.extend_from_slice(&(x as i16).to_le_bytes());
                }
            }
            NiftiDatatype::Float32 => {
                for &x in &self.data {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Voxel values with `scl_slope`/`scl_inter` applied (slope 0 means unscaled).
    pub fn to_volume(&self, patient_id: &str) -> Result<Volume> {
        let slope = f64::from(f32_at(&self.header, OFF_SCL_SLOPE));
        let inter = f64::from(f32_at(&self.header, OFF_SCL_INTER));
        let voxels = if slope != 0.0 && (slope != 1.0 || inter != 0.0) {
            self.data.iter().map(|&x| x * slope + inter).collect()
        } else {
            self.data.clone()
        };
        Volume::new(patient_id, self.dims, self.spacing, voxels)
    }
}

/// Reads a NIfTI-1 volume; the patient id is the file stem.
pub fn read_nifti(path: &Path) -> Result<Volume> {
    let img = NiftiImage::read(path)?;
    let stem = path
        .file_name()
        .and_then(|s| s.to_str())
        .map(|s| s.trim_end_matches(".nii"))
        .unwrap_or_default();
    img.to_volume(stem)
}

pub fn write_nifti(path: &Path, v: &Volume, datatype: NiftiDatatype) -> Result<()> {
    NiftiImage::from_volume(v, datatype)?.write(path)
}
