//! Weights files and loss traces.
//!
//! Weights file, version 1, all little-endian:
//! `"PAGW"` | version u32 | SHA-256 of the model config JSON (32 bytes) |
//! fold_index u32 | epoch_of_best u32 | target_mean f64 | target_sd f64 |
//! best_val_mae f64 | n u64 | n × f64 weights.

use super::network::{ModelConfig, Network};
use super::train::{EpochStats, FoldModel};
use super::{RegressorError, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PAGW";
const VERSION: u32 = 1;
const FIXED_LEN: usize = 4 + 4 + 32 + 4 + 4 + 8 * 3 + 8;

pub fn config_digest(cfg: &ModelConfig) -> [u8; 32] {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json).into()
}

pub fn encode_fold_model(m: &FoldModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_LEN + 8 * m.best_weights.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&config_digest(&m.config));
    out.extend_from_slice(&(m.fold_index as u32).to_le_bytes());
    out.extend_from_slice(&(m.epoch_of_best as u32).to_le_bytes());
    for v in [m.target_mean, m.target_sd, m.best_val_mae] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(m.best_weights.values.len() as u64).to_le_bytes());
    for v in &m.best_weights.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Decodes a weights file written for `cfg`. The trace is not stored in the file.
pub fn decode_fold_model(bytes: &[u8], cfg: &ModelConfig) -> Result<FoldModel> {
    let bad = |m: &str| RegressorError::BadWeightsFile(m.to_string());
    if bytes.len() < FIXED_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("magic is not PAGW"));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    if bytes[8..40] != config_digest(cfg) {
        return Err(RegressorError::ConfigMismatch);
    }
    let n = u64::from_le_bytes(bytes[FIXED_LEN - 8..FIXED_LEN].try_into().unwrap()) as usize;
    if bytes.len() != FIXED_LEN + 8 * n {
        return Err(bad("payload length does not match header"));
    }
    let mut w = Network::new(cfg)?.zero_weights();
    if w.values.len() != n {
        return Err(RegressorError::ShapeMismatch { expected: w.values.len(), got: n });
    }
    for (i, v) in w.values.iter_mut().enumerate() {
        *v = f64_at(bytes, FIXED_LEN + 8 * i);
    }
    Ok(FoldModel {
        fold_index: u32_at(bytes, 40) as usize,
        epoch_of_best: u32_at(bytes, 44) as usize,
        target_mean: f64_at(bytes, 48),
        target_sd: f64_at(bytes, 56),
        best_val_mae: f64_at(bytes, 64),
        config: cfg.clone(),
        best_weights: w,
        trace: vec![],
    })
}

pub fn save_fold_model(m: &FoldModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_fold_model(m))?;
    Ok(())
}

pub fn load_fold_model(path: &Path, cfg: &ModelConfig) -> Result<FoldModel> {
    decode_fold_model(&std::fs::read(path)?, cfg)
}

/// CSV `fold,epoch,train_mae,val_mae`, one row per fold and epoch.
pub fn write_trace_csv<W: std::io::Write>(models: &[FoldModel], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fold", "epoch", "train_mae", "val_mae"])?;
    for m in models {
        for e in &m.trace {
            w.write_record([m.fold_index.to_string(), e.epoch.to_string(), e.train_mae.to_string(), e.val_mae.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV back as `(fold, stats)` rows.
pub fn read_trace_csv<R: std::io::Read>(reader: R) -> Result<Vec<(usize, EpochStats)>> {
    #[derive(serde::Deserialize)]
    struct Row {
        fold: usize,
        epoch: usize,
        train_mae: f64,
        val_mae: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = vec![];
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push((r.fold, EpochStats { epoch: r.epoch, train_mae: r.train_mae, val_mae: r.val_mae }));
    }
    Ok(out)
}
