//! Volumetric image handling: NIfTI-1 and raw fixture codecs, intensity
//! normalization, gland-centred cropping and 2-D slice extraction.

mod fixture;
mod nifti;
mod preprocess;

pub use fixture::{read_fixture, write_fixture, FixtureDtype, FixtureHeader};
pub use nifti::{read_nifti, write_nifti, NiftiDatatype, NiftiImage, NIFTI_HEADER_SIZE};
pub use preprocess::{
    crop_box, crop_mask, crop_to_gland, extract_slices, gland_bounding_box, normalize_intensity,
    normalize_with_params, resize_bilinear, NormalizeMethod, NormalizeParams, SliceInclusion,
};

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("bad magic {0:?}: expected \"n+1\\0\" or \"ni1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i32),
    #[error("truncated file: voxel payload needs {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("volume is constant; intensity normalization is undefined")]
    ConstantVolume,
    #[error("mask has no nonzero voxels")]
    EmptyMask,
    #[error("dimension mismatch: volume {volume:?} vs mask {mask:?}")]
    DimensionMismatch { volume: [usize; 3], mask: [usize; 3] },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

impl ImagingError {
    /// Stable variant name, used when listing failed patients.
    pub fn name(&self) -> &'static str {
        match self {
            ImagingError::BadMagic(_) => "BadMagic",
            ImagingError::UnsupportedDatatype(_) => "UnsupportedDatatype",
            ImagingError::TruncatedFile { .. } => "TruncatedFile",
            ImagingError::BadHeader(_) => "BadHeader",
            ImagingError::ConstantVolume => "ConstantVolume",
            ImagingError::EmptyMask => "EmptyMask",
            ImagingError::DimensionMismatch { .. } => "DimensionMismatch",
            ImagingError::InvalidVolume(_) => "InvalidVolume",
            ImagingError::InvalidMask(_) => "InvalidMask",
            ImagingError::Io(_) => "Io",
            ImagingError::Sidecar(_) => "Sidecar",
        }
    }
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// A 3-D voxel grid stored x-fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub patient_id: String,
    pub dims: [usize; 3],
    /// Voxel spacing in mm.
    pub spacing: [f64; 3],
    pub voxels: Vec<f64>,
}

impl Volume {
    pub fn new(
        patient_id: impl Into<String>,
        dims: [usize; 3],
        spacing: [f64; 3],
        voxels: Vec<f64>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(ImagingError::InvalidVolume(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(ImagingError::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if voxels.len() != n {
            return Err(ImagingError::InvalidVolume(format!(
                "{} voxels for dims {dims:?} (expected {n})",
                voxels.len()
            )));
        }
        Ok(Self { patient_id: patient_id.into(), dims, spacing, voxels })
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.index(x, y, z)]
    }

    /// The axial slice at `z` as a row-major (y rows, x columns) buffer.
    pub fn slice(&self, z: usize) -> &[f64] {
        let plane = self.dims[0] * self.dims[1];
        &self.voxels[z * plane..(z + 1) * plane]
    }
}

/// Binary gland mask paired with a [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub dims: [usize; 3],
    pub voxels: Vec<u8>,
}

impl Mask {
    pub fn new(dims: [usize; 3], voxels: Vec<u8>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(ImagingError::InvalidMask(format!("zero dimension in {dims:?}")));
        }
        if voxels.len() != dims[0] * dims[1] * dims[2] {
            return Err(ImagingError::InvalidMask(format!(
                "{} voxels for dims {dims:?}",
                voxels.len()
            )));
        }
        if let Some(v) = voxels.iter().find(|&&v| v > 1) {
            return Err(ImagingError::InvalidMask(format!("non-binary value {v}")));
        }
        Ok(Self { dims, voxels })
    }

    /// Interprets a volume as a mask; every voxel must be exactly 0 or 1.
    pub fn from_volume(v: &Volume) -> Result<Self> {
        let voxels = v
            .voxels
            .iter()
            .map(|&x| {
                if x == 0.0 {
                    Ok(0)
                } else if x == 1.0 {
                    Ok(1)
                } else {
                    Err(ImagingError::InvalidMask(format!("non-binary value {x}")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(v.dims, voxels)
    }

    pub fn to_volume(&self, patient_id: &str, spacing: [f64; 3]) -> Result<Volume> {
        Volume::new(
            patient_id,
            self.dims,
            spacing,
            self.voxels.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[x + self.dims[0] * (y + self.dims[1] * z)] != 0
    }

    /// True when the axial cross-section at `z` has any nonzero pixel.
    pub fn slice_nonzero(&self, z: usize) -> bool {
        let plane = self.dims[0] * self.dims[1];
        self.voxels[z * plane..(z + 1) * plane].iter().any(|&v| v != 0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    pub fn check_pair(&self, v: &Volume) -> Result<()> {
        if self.dims != v.dims {
            return Err(ImagingError::DimensionMismatch { volume: v.dims, mask: self.dims });
        }
        Ok(())
    }
}

/// Inclusive in-plane pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Box2D {
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
}

impl Box2D {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    /// Grows the box by `margin` on all four sides, clamped to an `nx × ny` image.
    pub fn expand(&self, margin: usize, nx: usize, ny: usize) -> Box2D {
        Box2D {
            x_min: self.x_min.saturating_sub(margin),
            x_max: (self.x_max + margin).min(nx - 1),
            y_min: self.y_min.saturating_sub(margin),
            y_max: (self.y_max + margin).min(ny - 1),
        }
    }
}

/// One resized axial slice tied to a patient and a regression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSample {
    pub patient_id: String,
    pub slice_index: usize,
    pub target_age: f64,
    /// Side length of the square pixel grid.
    pub size: usize,
    /// Row-major pixels, `size * size` values in [0, 1].
    pub pixels: Vec<f64>,
}

/// Loads a volume from either a `.nii` file or a `.json`/`.raw` fixture pair.
pub fn read_volume(path: &Path) -> Result<Volume> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => read_fixture(path),
        _ => read_nifti(path),
    }
}
