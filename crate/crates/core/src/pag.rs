//! Prostate Age Gap: predicted age minus chronological age, one value per patient.

use crate::cohort::{assign_label, CohortError, Label, PatientRecord};
use crate::stats::{self, Covariate, CovariateSource};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PagError {
    #[error("no slice predictions for patient")]
    EmptySliceList,
    #[error("non-finite age value")]
    NonFinite,
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PagError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PagResult {
    pub patient_id: String,
    pub predicted_age: f64,
    pub chronological_age: f64,
    pub pag: f64,
    pub n_slices: usize,
}

/// Positive values mean the model sees the patient as older than they are.
pub fn compute_pag(predicted_age: f64, chronological_age: f64) -> f64 {
    predicted_age - chronological_age
}

pub fn pag_per_patient(slice_pags: &[f64]) -> Result<f64> {
    if slice_pags.is_empty() {
        return Err(PagError::EmptySliceList);
    }
    Ok(stats::mean(slice_pags))
}

impl PagResult {
    /// Aggregates per-slice age predictions for one patient.
    pub fn from_slices(patient_id: &str, slice_predictions: &[f64], chronological_age: f64) -> Result<Self> {
        if slice_predictions.is_empty() {
            return Err(PagError::EmptySliceList);
        }
        if !chronological_age.is_finite() || slice_predictions.iter().any(|p| !p.is_finite()) {
            return Err(PagError::NonFinite);
        }
        let predicted_age = stats::mean(slice_predictions);
        Ok(Self {
            patient_id: patient_id.to_string(),
            predicted_age,
            chronological_age,
            pag: compute_pag(predicted_age, chronological_age),
            n_slices: slice_predictions.len(),
        })
    }
}

/// Analysis-ready row: a PAG result joined with the patient's clinical covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PagRow {
    pub patient_id: String,
    pub chronological_age: f64,
    pub predicted_age: f64,
    pub pag: f64,
    pub n_slices: usize,
    pub label: Label,
    pub psa: Option<f64>,
    pub volume_ml: Option<f64>,
    pub psad: Option<f64>,
    pub pirads: Option<u8>,
}

impl PagRow {
    pub fn join(result: &PagResult, record: &PatientRecord) -> Result<Self> {
        Ok(Self {
            patient_id: result.patient_id.clone(),
            chronological_age: result.chronological_age,
            predicted_age: result.predicted_age,
            pag: result.pag,
            n_slices: result.n_slices,
            label: assign_label(record)?,
            psa: record.psa,
            volume_ml: record.prostate_volume,
            psad: record.psad.or_else(|| Some(record.psa? / record.prostate_volume?)),
            pirads: record.pirads,
        })
    }

    pub fn result(&self) -> PagResult {
        PagResult {
            patient_id: self.patient_id.clone(),
            predicted_age: self.predicted_age,
            chronological_age: self.chronological_age,
            pag: self.pag,
            n_slices: self.n_slices,
        }
    }
}

impl CovariateSource for PagRow {
    fn subject_id(&self) -> &str {
        &self.patient_id
    }

    fn covariate(&self, c: Covariate) -> Option<f64> {
        match c {
            Covariate::Pag => Some(self.pag),
            Covariate::Age => Some(self.chronological_age),
            Covariate::Psa => self.psa,
            Covariate::VolumeMl => self.volume_ml,
            Covariate::Psad => self.psad,
            Covariate::PiradsGe3 => self.pirads.map(|p| f64::from(u8::from(p >= 3))),
        }
    }

    fn is_case(&self) -> bool {
        self.label == Label::CsPC
    }
}

pub fn write_pag_csv<W: std::io::Write>(rows: &[PagRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "patient_id", "chronological_age", "predicted_age", "pag", "n_slices", "label", "psa", "volume_ml",
            "psad", "pirads",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pag_csv<R: std::io::Read>(reader: R) -> Result<Vec<PagRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn save_pag_csv(rows: &[PagRow], path: &Path) -> Result<()> {
    write_pag_csv(rows, std::fs::File::create(path)?)
}

pub fn load_pag_csv(path: &Path) -> Result<Vec<PagRow>> {
    read_pag_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    fn of(group: &str, pags: &[f64]) -> Self {
        let (mean, sd) = if pags.is_empty() { (f64::NAN, f64::NAN) } else { (stats::mean(pags), stats::sample_sd(pags)) };
        Self { group: group.to_string(), n: pags.len(), mean, sd }
    }

    /// `mean ± SD` with two decimals, or `-` for an empty group.
    pub fn display(&self) -> String {
        if self.n == 0 {
            return "-".to_string();
        }
        format!("{:.2} ± {:.2}", self.mean, self.sd)
    }
}

/// Mean ± SD of PAG for ncsPC, csPC and the csPC patients with PI-RADS ≤ 2.
pub fn group_summaries(rows: &[PagRow]) -> Vec<GroupSummary> {
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by.entry(r.label.as_str()).or_default().push(r.pag);
    }
    let low_pirads_cspc = low_pirads_cspc(rows);
    vec![
        GroupSummary::of("ncsPC", by.get("ncsPC").map_or(&[][..], |v| v)),
        GroupSummary::of("csPC", by.get("csPC").map_or(&[][..], |v| v)),
        GroupSummary::of("csPC PI-RADS<=2", &low_pirads_cspc),
    ]
}

/// PAG values of csPC patients whose PI-RADS is recorded and at most 2.
pub fn low_pirads_cspc(rows: &[PagRow]) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.label == Label::CsPC && r.pirads.is_some_and(|p| p <= 2))
        .map(|r| r.pag)
        .collect()
}
