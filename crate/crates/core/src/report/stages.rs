use super::{read_json, require, store, Provenance, ReportError, Result, RunConfig, Stage, StageWriter};
use crate::cohort::{self, ExclusionReport, Label, PatientRecord, SplitAssignment};
use crate::imaging::{self, Box2D, ImagingError, Mask, NormalizeParams, SliceSample};
use crate::pag::{self, PagResult, PagRow};
use crate::regressor::{self, FoldModel};
use crate::synth;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let cohort = synth::generate_cohort(&cfg.synth)?;
    let mut w = StageWriter::new(cfg, Stage::Synth)?;
    synth::write_cohort(&cohort, w.dir())?;
    let mut names = vec!["cohort.csv".to_string(), "ground_truth.csv".to_string()];
    for p in &cohort.patients {
        for base in [synth::volume_path(&p.patient_id), synth::mask_path(&p.patient_id)] {
            names.push(base.replace(".json", ".raw"));
            names.push(base);
        }
    }
    for name in names {
        let bytes = std::fs::read(w.dir().join(&name))?;
        w.write(&name, &bytes)?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub label: Label,
    pub n_slices: usize,
    pub crop_box: Box2D,
    pub normalization: NormalizeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPatient {
    pub patient_id: String,
    /// Variant name of the imaging error, e.g. `BadMagic`.
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    /// The configured cohort CSV, or `synth/cohort.csv` when it was generated.
    pub cohort_csv: String,
    pub n_records: usize,
    pub exclusions: ExclusionReport,
    pub total_slices: usize,
    pub patients: Vec<ManifestEntry>,
    pub failed: Vec<FailedPatient>,
}

fn preprocess_patient(
    r: &PatientRecord,
    root: &Path,
    cfg: &RunConfig,
) -> std::result::Result<(ManifestEntry, Vec<SliceSample>), ImagingError> {
    let (vp, mp) = r
        .image_paths(root)
        .ok_or_else(|| ImagingError::InvalidVolume("record has no image paths".into()))?;
    let mut volume = imaging::read_volume(&vp)?;
    volume.patient_id = r.patient_id.clone();
    let mask = Mask::from_volume(&imaging::read_volume(&mp)?)?;
    mask.check_pair(&volume)?;
    let (normalized, normalization) = imaging::normalize_with_params(&volume, cfg.preprocess.normalize)?;
    let crop_box = imaging::gland_bounding_box(&mask)?.expand(cfg.preprocess.crop_margin, volume.dims[0], volume.dims[1]);
    let cropped = imaging::crop_box(&normalized, crop_box);
    let slices =
        imaging::extract_slices(&cropped, &mask, r.age(), cfg.model.input_size, cfg.preprocess.inclusion)?;
    let label = cohort::assign_label(r).map_err(|e| ImagingError::InvalidVolume(e.to_string()))?;
    let entry = ManifestEntry { patient_id: r.patient_id.clone(), label, n_slices: slices.len(), crop_box, normalization };
    Ok((entry, slices))
}

/// Included records of the configured cohort, in CSV order.
fn included_records(cfg: &RunConfig) -> Result<(Vec<PatientRecord>, ExclusionReport, usize)> {
    let csv_path = cfg.cohort_csv();
    require(&csv_path, "cohort CSV")?;
    let records = cohort::read_cohort_csv(&csv_path)?;
    let (kept, report) = cohort::apply_inclusion_criteria(&records, Some(&cfg.image_root()));
    Ok((kept, report, records.len()))
}

/// Normalizes, crops and slices every included patient. A patient whose images
/// fail is listed under `failed` with the error name and skipped.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<()> {
    let (kept, exclusions, n_records) = included_records(cfg)?;
    let root = cfg.image_root();
    let results: Vec<_> = kept.par_iter().map(|r| preprocess_patient(r, &root, cfg)).collect();
    let mut patients = vec![];
    let mut failed = vec![];
    let mut slices = vec![];
    for (r, res) in kept.iter().zip(results) {
        match res {
            Ok((entry, s)) => {
                patients.push(entry);
                slices.extend(s);
            }
            Err(e) => failed.push(FailedPatient {
                patient_id: r.patient_id.clone(),
                error: e.name().to_string(),
                message: e.to_string(),
            }),
        }
    }
    let manifest = Manifest {
        provenance: cfg.provenance(),
        cohort_csv: match &cfg.cohort_csv {
            Some(p) => p.display().to_string(),
            None => format!("{}/cohort.csv", Stage::Synth.dir_name()),
        },
        n_records,
        exclusions,
        total_slices: slices.len(),
        patients,
        failed,
    };
    let mut w = StageWriter::new(cfg, Stage::Preprocess)?;
    w.write("slices.bin", &store::encode_slices(&slices))?;
    w.write_json("manifest.json", &manifest)?;
    w.finish()
}

pub fn load_manifest(cfg: &RunConfig) -> Result<Manifest> {
    read_json(&cfg.stage_dir(Stage::Preprocess).join("manifest.json"), "preprocess manifest")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub provenance: Provenance,
    /// The regressor trains on ncsPC patients only; `train_ids` and `folds`
    /// hold ncsPC ids, `test_ids` the held-out ncsPC ids followed by every csPC id.
    pub split: SplitAssignment,
}

pub fn cmd_split(cfg: &RunConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let ids_with = |label: Label| -> Vec<String> {
        manifest.patients.iter().filter(|p| p.label == label).map(|p| p.patient_id.clone()).collect()
    };
    let mut split = cohort::split_train_test(&ids_with(Label::NcsPC), cfg.split.train_fraction, cfg.seed)?;
    split.folds = cohort::make_cv_folds(&split.train_ids, cfg.split.n_folds, cfg.seed)?;
    let mut cspc = ids_with(Label::CsPC);
    cspc.sort();
    split.test_ids.extend(cspc);
    split.validate()?;
    let mut w = StageWriter::new(cfg, Stage::Split)?;
    w.write_json("split.json", &SplitFile { provenance: cfg.provenance(), split })?;
    w.finish()
}

pub fn load_split(cfg: &RunConfig) -> Result<SplitAssignment> {
    let file: SplitFile = read_json(&cfg.stage_dir(Stage::Split).join("split.json"), "split file")?;
    file.split.validate()?;
    Ok(file.split)
}

fn slices_by_patient(cfg: &RunConfig) -> Result<BTreeMap<String, Vec<SliceSample>>> {
    let mut by: BTreeMap<String, Vec<SliceSample>> = BTreeMap::new();
    for s in store::read_slices(&cfg.stage_dir(Stage::Preprocess).join("slices.bin"))? {
        by.entry(s.patient_id.clone()).or_default().push(s);
    }
    Ok(by)
}

fn weights_name(fold: usize) -> String {
    format!("fold_{fold}.pagw")
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let split = load_split(cfg)?;
    let slices = slices_by_patient(cfg)?;
    let (models, reports) = regressor::train_cv(&cfg.model, &cfg.train, &split.folds, &slices)?;
    let mut w = StageWriter::new(cfg, Stage::Train)?;
    for m in &models {
        w.write(&weights_name(m.fold_index), &regressor::encode_fold_model(m))?;
    }
    let mut trace = vec![];
    regressor::write_trace_csv(&models, &mut trace)?;
    w.write("trace.csv", &trace)?;
    let mut summary = csv::Writer::from_writer(vec![]);
    for r in &reports {
        summary.serialize(r)?;
    }
    let bytes = summary.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    w.write("summary.csv", &bytes)?;
    w.finish()
}

pub fn load_models(cfg: &RunConfig, n_folds: usize) -> Result<Vec<FoldModel>> {
    (0..n_folds)
        .map(|k| {
            let path = cfg.stage_dir(Stage::Train).join(weights_name(k));
            require(&path, "weights file")?;
            Ok(regressor::load_fold_model(&path, &cfg.model)?)
        })
        .collect()
}

/// Per-slice mean over the fold models.
fn ensemble_slice_predictions(models: &[FoldModel], slices: &[SliceSample]) -> Result<Vec<f64>> {
    let per_model: Vec<Vec<f64>> = models.iter().map(|m| m.predict_slices(slices)).collect::<regressor::Result<_>>()?;
    Ok((0..slices.len())
        .map(|i| per_model.iter().map(|p| p[i]).sum::<f64>() / models.len() as f64)
        .collect())
}

/// Test-set PAG from the fold ensemble, plus out-of-fold PAG for the regressor's
/// training patients (each predicted by the model that validated on it).
pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let split = load_split(cfg)?;
    let slices = slices_by_patient(cfg)?;
    let models = load_models(cfg, split.folds.len())?;
    let (records, _, _) = included_records(cfg)?;
    let by_id: HashMap<&str, &PatientRecord> = records.iter().map(|r| (r.patient_id.as_str(), r)).collect();

    let row_for = |id: &String, models: &[FoldModel]| -> Result<PagRow> {
        let record = by_id.get(id.as_str()).ok_or_else(|| ReportError::Data(format!("patient `{id}` not in cohort")))?;
        let s = slices.get(id).ok_or_else(|| ReportError::Data(format!("no slices for patient `{id}`")))?;
        let preds = ensemble_slice_predictions(models, s)?;
        let result = PagResult::from_slices(id, &preds, record.age())?;
        Ok(PagRow::join(&result, record)?)
    };
    let test: Vec<PagRow> = split.test_ids.par_iter().map(|id| row_for(id, &models)).collect::<Result<_>>()?;
    let oof: Vec<PagRow> = split
        .folds
        .iter()
        .enumerate()
        .flat_map(|(k, ids)| ids.iter().map(move |id| (k, id)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(k, id)| row_for(id, std::slice::from_ref(&models[k])))
        .collect::<Result<_>>()?;

    let mut w = StageWriter::new(cfg, Stage::Predict)?;
    for (name, rows) in [("pag.csv", &test), ("pag_train_oof.csv", &oof)] {
        let mut buf = vec![];
        pag::write_pag_csv(rows, &mut buf)?;
        w.write(name, &buf)?;
    }
    w.finish()
}
