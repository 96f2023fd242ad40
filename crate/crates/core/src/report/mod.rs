//! Pipeline orchestration from a single JSON run config, plus the table,
//! JSON and SVG emitters for the analysis outputs.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! synth/       cohort.csv, ground_truth.csv, images/
//! preprocess/  slices.bin, manifest.json
//! split/       split.json
//! train/       fold_<k>.pagw, trace.csv, summary.csv
//! predict/     pag.csv (analysis set), pag_train_oof.csv
//! analyze/     table1.csv, table2.csv, odds_ratios.csv, roc_*.json, ..., bundle.json
//! plot/        pag_distribution.svg, pag_subgroups.svg, roc.svg, confusion.svg
//! ```
//!
//! JSON and SVG outputs embed their provenance. Every stage directory also
//! gets a `provenance.json` with the SHA-256 of each file the stage wrote.

mod analyze;
mod plot;
mod stages;
mod store;

pub use analyze::{cmd_analyze, load_bundle, AnalysisBundle, CompareResult, ConfusionEntry, GroupPag, OddsRatioRow, RocOutput};
pub use plot::{cmd_plot, render_confusion_svg, render_group_svg, render_histogram_svg, render_roc_svg};
pub use stages::{
    cmd_predict, cmd_preprocess, cmd_split, cmd_synth, cmd_train, FailedPatient, Manifest, ManifestEntry,
    SplitFile,
};
pub use store::{decode_slices, encode_slices, read_slices, write_slices};

use crate::cohort::{CohortError, TestMapping};
use crate::imaging::{ImagingError, NormalizeMethod, SliceInclusion};
use crate::pag::PagError;
use crate::regressor::{ModelConfig, RegressorError, TrainConfig};
use crate::stats::{BootstrapOptions, FitOptions, ModelId, StatsError};
use crate::synth::{SynthConfig, SynthError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ARTIFACT_VERSION: &str = "pag-artifacts/1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing {what}: {path}")]
    MissingInput { what: &'static str, path: PathBuf },
    #[error("data error: {0}")]
    Data(String),
    #[error("all risk models failed: {0}")]
    AllModelsFailed(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Regressor(#[from] RegressorError),
    #[error(transparent)]
    Pag(#[from] PagError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ReportError {
    /// 2 config error, 3 data error, 4 statistical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) | ReportError::Synth(SynthError::InvalidConfig(_)) => 2,
            ReportError::Regressor(RegressorError::InvalidConfig(_)) => 2,
            ReportError::Stats(_) | ReportError::AllModelsFailed(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ReportError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessOptions {
    pub normalize: NormalizeMethod,
    pub crop_margin: usize,
    pub inclusion: SliceInclusion,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self { normalize: NormalizeMethod::default(), crop_margin: 40, inclusion: SliceInclusion::MaskNonzero }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    /// Fraction of ncsPC patients used to train the age regressor.
    pub train_fraction: f64,
    pub n_folds: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { train_fraction: 0.6, n_folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into every stage's own seed field.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Cohort CSV; defaults to `<out_dir>/synth/cohort.csv`.
    pub cohort_csv: Option<PathBuf>,
    /// Root for the image paths in the cohort CSV; defaults to the CSV's directory.
    pub image_root: Option<PathBuf>,
    pub synth: SynthConfig,
    pub preprocess: PreprocessOptions,
    pub split: SplitOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub models: Vec<ModelId>,
    pub fit: FitOptions,
    pub confidence_level: f64,
    pub bootstrap: BootstrapOptions,
    pub compare_replicates: usize,
    pub permutation_replicates: usize,
    pub fpr_points: Vec<f64>,
    pub test_mapping: TestMapping,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            cohort_csv: None,
            image_root: None,
            synth: SynthConfig::default(),
            preprocess: PreprocessOptions::default(),
            split: SplitOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            models: ModelId::PAG_MODELS.to_vec(),
            fit: FitOptions::default(),
            confidence_level: 0.95,
            bootstrap: BootstrapOptions::default(),
            compare_replicates: 1000,
            permutation_replicates: 10_000,
            fpr_points: vec![0.05, 0.10, 0.30, 0.60],
            test_mapping: TestMapping::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ReportError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReportError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Config file (or defaults), then `--seed` and `--out` overrides. The
    /// master seed is always copied into the stage configs.
    pub fn resolve(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut cfg = match config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(out) = out {
            cfg.out_dir = out;
        }
        let seed = seed.unwrap_or(cfg.seed);
        let cfg = cfg.with_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copies the master seed into the stage configs.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
        self.bootstrap.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ReportError::Config(m));
        if self.synth.seed != self.seed || self.train.seed != self.seed || self.bootstrap.seed != self.seed {
            return bad("stage seeds differ from the master seed; use with_seed".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!("split.train_fraction {}", self.split.train_fraction));
        }
        if self.split.n_folds < 2 {
            return bad(format!("split.n_folds {} (need ≥ 2)", self.split.n_folds));
        }
        if self.models.is_empty() {
            return bad("no risk models selected".into());
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return bad(format!("confidence_level {}", self.confidence_level));
        }
        if self.bootstrap.n_replicates == 0 || self.compare_replicates == 0 || self.permutation_replicates == 0 {
            return bad("replicate counts must be positive".into());
        }
        if let Some(p) = self.fpr_points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("fpr point {p} outside [0, 1]"));
        }
        self.synth.validate().map_err(|e| ReportError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| ReportError::Config(e.to_string()))?;
        crate::regressor::Network::new(&self.model).map_err(|e| ReportError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 (hex) of the config JSON with `out_dir` blanked, so the same
    /// run written to two places carries the same hash.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            seed: self.seed,
            config_hash: self.config_hash(),
            artifact_version: ARTIFACT_VERSION.to_string(),
        }
    }

    pub fn cohort_csv(&self) -> PathBuf {
        self.cohort_csv.clone().unwrap_or_else(|| self.stage_dir(Stage::Synth).join("cohort.csv"))
    }

    pub fn image_root(&self) -> PathBuf {
        self.image_root.clone().unwrap_or_else(|| {
            self.cohort_csv().parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
        })
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out_dir.join(stage.dir_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    Split,
    Train,
    Predict,
    Analyze,
    Plot,
}

impl Stage {
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Analyze => "analyze",
            Stage::Plot => "plot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub artifact_version: String,
}

/// Collects the files a stage writes and records their digests.
pub(crate) struct StageWriter {
    dir: PathBuf,
    provenance: Provenance,
    files: BTreeMap<String, String>,
}

impl StageWriter {
    pub(crate) fn new(cfg: &RunConfig, stage: Stage) -> Result<Self> {
        let dir = cfg.stage_dir(stage);
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, provenance: cfg.provenance(), files: BTreeMap::new() })
    }

    pub(crate) fn dir(&self) -> &Path {
        &self.dir
    }

    pub(crate) fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    pub(crate) fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub(crate) fn finish(self) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            provenance: &'a Provenance,
            files: &'a BTreeMap<String, String>,
        }
        let mut bytes = serde_json::to_vec_pretty(&Out { provenance: &self.provenance, files: &self.files })?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join("provenance.json"), bytes)?;
        Ok(())
    }
}

pub(crate) fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(ReportError::MissingInput { what, path: path.to_path_buf() })
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    require(path, what)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ReportError::Data(format!("{}: {e}", path.display())))
}

/// Every stage in order. The synth stage runs only when no cohort CSV is configured.
pub fn run_all(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.cohort_csv.is_none() {
        cmd_synth(cfg)?;
    }
    cmd_preprocess(cfg)?;
    cmd_split(cfg)?;
    cmd_train(cfg)?;
    cmd_predict(cfg)?;
    cmd_analyze(cfg)?;
    cmd_plot(cfg)?;
    Ok(())
}
