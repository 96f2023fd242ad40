//! Sidecar fixture format: `<name>.json` describing dims/spacing/dtype and
//! `<name>.raw` holding the little-endian, x-fastest voxel payload.

use super::{ImagingError, Result, Volume};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureDtype {
    U8,
    I16,
    F32,
    F64,
}

impl FixtureDtype {
    fn bytes(self) -> usize {
        match self {
            FixtureDtype::U8 => 1,
            FixtureDtype::I16 => 2,
            FixtureDtype::F32 => 4,
            FixtureDtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: FixtureDtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

fn pair_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("raw"))
}

/// Reads a fixture given either its `.json` or its `.raw` path.
pub fn read_fixture(path: &Path) -> Result<Volume> {
    let (json, raw) = pair_paths(path);
    let header: FixtureHeader = serde_json::from_slice(&fs::read(&json)?)?;
    let payload = fs::read(&raw)?;
    let n = header.dims.iter().product::<usize>();
    let expected = n * header.dtype.bytes();
    if payload.len() < expected {
        return Err(ImagingError::TruncatedFile { expected, found: payload.len() });
    }
    let p = &payload[..expected];
    let voxels: Vec<f64> = match header.dtype {
        FixtureDtype::U8 => p.iter().map(|&b| f64::from(b)).collect(),
        FixtureDtype::I16 => p
            .chunks_exact(2)
            .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])))
            .collect(),
        FixtureDtype::F32 => p
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        FixtureDtype::F64 => p
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let id = header.patient_id.clone().unwrap_or_else(|| {
        json.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
    });
    Volume::new(id, header.dims, header.spacing, voxels)
}

/// Writes `<path>.json` + `<path>.raw`. Values are cast to `dtype`.
pub fn write_fixture(path: &Path, v: &Volume, dtype: FixtureDtype) -> Result<()> {
    let (json, raw) = pair_paths(path);
    let header = FixtureHeader {
        dims: v.dims,
        spacing: v.spacing,
        dtype,
        patient_id: Some(v.patient_id.clone()),
    };
    let mut buf = Vec::with_capacity(v.len() * dtype.bytes());
    for &x in &v.voxels {
        match dtype {
            FixtureDtype::U8 => buf.push(x as u8),
            FixtureDtype::I16 => buf.extend_from_slice(&(x as i16).to_le_bytes()),
            FixtureDtype::F32 => buf.extend_from_slice(&(x as f32).to_le_bytes()),
            FixtureDtype::F64 => buf.extend_from_slice(&x.to_le_bytes()),
        }
    }
    fs::write(&json, serde_json::to_vec_pretty(&header)?)?;
    fs::write(&raw, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::new(
            "case-7",
            [3, 2, 2],
            [0.5, 0.5, 3.0],
            (0..12).map(|i| i as f64 * 0.125).collect(),
        )
        .unwrap();
        let path = dir.path().join("case-7");
        write_fixture(&path, &v, FixtureDtype::F64).unwrap();
        assert_eq!(read_fixture(&path.with_extension("json")).unwrap(), v);
        assert_eq!(read_fixture(&path.with_extension("raw")).unwrap(), v);
    }

    #[test]
    fn short_payload_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short");
        let v = Volume::new("short", [2, 2, 2], [1.0; 3], vec![1.0; 8]).unwrap();
        write_fixture(&path, &v, FixtureDtype::F32).unwrap();
        let raw = path.with_extension("raw");
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..20]).unwrap();
        assert!(matches!(
            read_fixture(&path),
            Err(ImagingError::TruncatedFile { expected: 32, found: 20 })
        ));
    }
}
