//! Slice store, little-endian:
//! `"PAGS"` | version u32 | count u64 | per slice:
//! id_len u32 | id bytes | slice_index u32 | target_age f64 | size u32 | size² × f64.

use super::{ReportError, Result};
use crate::imaging::SliceSample;
use std::path::Path;

const MAGIC: &[u8; 4] = b"PAGS";
const VERSION: u32 = 1;

pub fn encode_slices(slices: &[SliceSample]) -> Vec<u8> {
    let payload: usize = slices.iter().map(|s| 20 + s.patient_id.len() + 8 * s.pixels.len()).sum();
    let mut out = Vec::with_capacity(16 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(slices.len() as u64).to_le_bytes());
    for s in slices {
        out.extend_from_slice(&(s.patient_id.len() as u32).to_le_bytes());
        out.extend_from_slice(s.patient_id.as_bytes());
        out.extend_from_slice(&(s.slice_index as u32).to_le_bytes());
        out.extend_from_slice(&s.target_age.to_le_bytes());
        out.extend_from_slice(&(s.size as u32).to_le_bytes());
        for p in &s.pixels {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| ReportError::Data("slice store is truncated".into()))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_slices(bytes: &[u8]) -> Result<Vec<SliceSample>> {
    let mut c = Cursor { b: bytes, at: 0 };
    if c.take(4)? != MAGIC {
        return Err(ReportError::Data("slice store magic is not PAGS".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(ReportError::Data(format!("unsupported slice store version {version}")));
    }
    let n = u64::from_le_bytes(c.take(8)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = c.u32()? as usize;
        let patient_id = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| ReportError::Data("patient id is not UTF-8".into()))?;
        let slice_index = c.u32()? as usize;
        let target_age = c.f64()?;
        let size = c.u32()? as usize;
        let pixels = (0..size * size).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        out.push(SliceSample { patient_id, slice_index, target_age, size, pixels });
    }
    if c.at != bytes.len() {
        return Err(ReportError::Data("trailing bytes after slice store".into()));
    }
    Ok(out)
}

pub fn write_slices(path: &Path, slices: &[SliceSample]) -> Result<()> {
    std::fs::write(path, encode_slices(slices))?;
    Ok(())
}

pub fn read_slices(path: &Path) -> Result<Vec<SliceSample>> {
    super::require(path, "slice store")?;
    decode_slices(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, z: usize) -> SliceSample {
        SliceSample {
            patient_id: id.into(),
            slice_index: z,
            target_age: 61.25 + z as f64,
            size: 2,
            pixels: vec![0.0, 0.25, 1.0 / 3.0, 1.0],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let s = vec![sample("a", 0), sample("bb", 3)];
        let bytes = encode_slices(&s);
        assert_eq!(decode_slices(&bytes).unwrap(), s);
        assert_eq!(decode_slices(&encode_slices(&[])).unwrap(), vec![]);
    }

    #[test]
    fn corrupt_stores_are_rejected() {
        let bytes = encode_slices(&[sample("a", 0)]);
        assert!(decode_slices(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_slices(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode_slices(&magic), Err(ReportError::Data(_))));
    }
}
