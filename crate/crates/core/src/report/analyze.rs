use super::stages::load_manifest;
use super::{require, Provenance, ReportError, Result, RunConfig, Stage, StageWriter};
use crate::cohort::{self, Label, PatientRecord, TableSummary};
use crate::pag::{self, PagRow};
use crate::stats::{
    self, build_design, fit_logistic, odds_ratio, predicted_risk, BootstrapOptions, ConfusionMatrix, ModelId,
    PermutationStatistic, TestResult,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// One Table 3 row. A model that fails keeps its row with `error` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioRow {
    pub model: String,
    pub adjustment: String,
    pub n: usize,
    pub or: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocOutput {
    pub model: String,
    /// `[fpr, tpr, threshold]`, threshold `null` for the accept-nothing point.
    pub points: Vec<(f64, f64, Option<f64>)>,
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResult {
    pub model_a: String,
    pub model_b: String,
    pub auc_a: f64,
    pub auc_b: f64,
    pub test: TestResult,
    pub n_replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub model: String,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold: f64,
    pub fpr_target: f64,
    pub achieved_fpr: f64,
    pub achieved_tpr: f64,
}

impl ConfusionEntry {
    fn new(model: ModelId, m: ConfusionMatrix) -> Self {
        Self {
            model: model.to_string(),
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
            threshold: m.threshold,
            fpr_target: m.fpr_target,
            achieved_fpr: m.achieved_fpr,
            achieved_tpr: m.achieved_tpr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPag {
    pub group: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub display: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub provenance: Provenance,
    pub n_patients: usize,
    pub n_cspc: usize,
    pub table1: TableSummary,
    pub table2: TableSummary,
    pub odds_ratios: Vec<OddsRatioRow>,
    pub roc: Vec<RocOutput>,
    pub compare_auc: Option<CompareResult>,
    pub confusion: Vec<ConfusionEntry>,
    pub groups: Vec<GroupPag>,
    /// Permutation test of mean PAG, csPC minus ncsPC.
    pub pag_group_test: Option<TestResult>,
    /// Step name → error message for every analysis step that failed.
    pub errors: BTreeMap<String, String>,
}

impl AnalysisBundle {
    pub fn roc(&self, model: ModelId) -> Option<&RocOutput> {
        let name = model.to_string();
        self.roc.iter().find(|r| r.model == name)
    }

    pub fn odds_ratio(&self, model: ModelId) -> Option<&OddsRatioRow> {
        let name = model.to_string();
        self.odds_ratios.iter().find(|r| r.model == name)
    }

    pub fn group(&self, name: &str) -> Option<&GroupPag> {
        self.groups.iter().find(|g| g.group == name)
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn odds_ratio_row(rows: &[PagRow], model: ModelId, cfg: &RunConfig) -> OddsRatioRow {
    let fitted = build_design(rows, model).and_then(|d| {
        let fit = fit_logistic(&d, &cfg.fit)?;
        Ok((d.nrows(), odds_ratio(&fit, "pag", cfg.confidence_level)?))
    });
    let base = OddsRatioRow {
        model: model.to_string(),
        adjustment: model.adjustment().to_string(),
        n: rows.len(),
        or: None,
        ci_low: None,
        ci_high: None,
        p_value: None,
        error: None,
    };
    match fitted {
        Ok((n, or)) => OddsRatioRow {
            n,
            or: finite(or.or),
            ci_low: finite(or.ci_low),
            ci_high: finite(or.ci_high),
            p_value: finite(or.p_value),
            ..base
        },
        Err(e) => OddsRatioRow { error: Some(format!("{}: {e}", e.name())), ..base },
    }
}

/// In-sample predicted risk of a fitted model, one value per row.
pub fn model_risk(rows: &[PagRow], model: ModelId, cfg: &RunConfig) -> stats::Result<Vec<f64>> {
    let d = build_design(rows, model)?;
    let fit = fit_logistic(&d, &cfg.fit)?;
    predicted_risk(&fit, &d)
}

fn roc_output(model: ModelId, risk: &[f64], labels: &[bool], opts: BootstrapOptions) -> stats::Result<RocOutput> {
    let curve = stats::roc_curve(risk, labels)?;
    let boot = stats::bootstrap_auc(risk, labels, opts)?;
    Ok(RocOutput {
        model: model.to_string(),
        points: curve.points.iter().map(|p| (p.fpr, p.tpr, finite(p.threshold))).collect(),
        auc: curve.auc,
        ci_low: boot.ci_low,
        ci_high: boot.ci_high,
        n_replicates: boot.n_replicates,
        seed: boot.seed,
    })
}

fn sanitize(mut t: TableSummary) -> TableSummary {
    for r in &mut t.rows {
        r.p_value = r.p_value.and_then(finite);
    }
    t
}

/// Runs the statistics on `rows` (the analysis set). `cohort_records` feed the
/// descriptive tables; Table 1 uses all of them, Table 2 the analysis set.
pub fn analyze_rows(cfg: &RunConfig, rows: &[PagRow], cohort_records: &[PatientRecord]) -> Result<AnalysisBundle> {
    let mut errors = BTreeMap::new();
    let labels: Vec<bool> = rows.iter().map(|r| r.label == Label::CsPC).collect();
    let n_cspc = labels.iter().filter(|&&l| l).count();

    let table1 = sanitize(cohort::baseline_table(cohort_records, None, false, &cfg.test_mapping)?);
    let ids: HashSet<&str> = rows.iter().map(|r| r.patient_id.as_str()).collect();
    let analysis_records: Vec<PatientRecord> =
        cohort_records.iter().filter(|r| ids.contains(r.patient_id.as_str())).cloned().collect();
    let pags: HashMap<String, f64> = rows.iter().map(|r| (r.patient_id.clone(), r.pag)).collect();
    let table2 = sanitize(cohort::baseline_table(&analysis_records, Some(&pags), true, &cfg.test_mapping)?);

    let odds_ratios: Vec<OddsRatioRow> = cfg.models.iter().map(|&m| odds_ratio_row(rows, m, cfg)).collect();

    let mut risks: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut roc = vec![];
    for model in [ModelId::II, ModelId::Base, ModelId::PiradsAdjusted] {
        match model_risk(rows, model, cfg).and_then(|risk| {
            let out = roc_output(model, &risk, &labels, cfg.bootstrap)?;
            Ok((risk, out))
        }) {
            Ok((risk, out)) => {
                risks.insert(model.to_string(), risk);
                roc.push(out);
            }
            Err(e) => {
                errors.insert(format!("roc_{model}"), format!("{}: {e}", e.name()));
            }
        }
    }

    let (pag_model, base_model) = (ModelId::II.to_string(), ModelId::Base.to_string());
    let compare_auc = match (risks.get(&pag_model), risks.get(&base_model)) {
        (Some(a), Some(b)) => match stats::compare_auc(a, b, &labels, cfg.compare_replicates, cfg.seed) {
            Ok(test) => Some(CompareResult {
                auc_a: stats::auc_trapezoid(a, &labels)?,
                auc_b: stats::auc_trapezoid(b, &labels)?,
                model_a: pag_model.clone(),
                model_b: base_model.clone(),
                test,
                n_replicates: cfg.compare_replicates,
                seed: cfg.seed,
            }),
            Err(e) => {
                errors.insert("compare_auc".into(), format!("{}: {e}", e.name()));
                None
            }
        },
        _ => None,
    };

    let mut confusion = vec![];
    if let Some(risk) = risks.get(&pag_model) {
        for &fpr in &cfg.fpr_points {
            match stats::confusion_at_fpr(risk, &labels, fpr) {
                Ok(m) => confusion.push(ConfusionEntry::new(ModelId::II, m)),
                Err(e) => {
                    errors.insert(format!("confusion_{fpr}"), format!("{}: {e}", e.name()));
                }
            }
        }
    }

    let values_of = |label: Label| -> Vec<f64> { rows.iter().filter(|r| r.label == label).map(|r| r.pag).collect() };
    let mut group_values = vec![values_of(Label::NcsPC), values_of(Label::CsPC), pag::low_pirads_cspc(rows)];
    let groups: Vec<GroupPag> = pag::group_summaries(rows)
        .into_iter()
        .zip(group_values.iter_mut())
        .map(|(g, values)| GroupPag {
            display: g.display(),
            group: g.group,
            n: g.n,
            mean: finite(g.mean),
            sd: finite(g.sd),
            values: std::mem::take(values),
        })
        .collect();
    let pag_group_test = match stats::permutation_test(
        &groups[1].values,
        &groups[0].values,
        PermutationStatistic::MeanDiff,
        cfg.permutation_replicates,
        cfg.seed,
    ) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.insert("pag_group_test".into(), format!("{}: {e}", e.name()));
            None
        }
    };

    Ok(AnalysisBundle {
        provenance: cfg.provenance(),
        n_patients: rows.len(),
        n_cspc,
        table1,
        table2,
        odds_ratios,
        roc,
        compare_auc,
        confusion,
        groups,
        pag_group_test,
        errors,
    })
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct Listing<'a, T: Serialize> {
    provenance: &'a Provenance,
    items: &'a [T],
}

fn odds_ratio_csv(rows: &[OddsRatioRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["model", "adjustment", "n", "or", "ci_low", "ci_high", "p_value", "error"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.adjustment.clone(),
            r.n.to_string(),
            opt(r.or),
            opt(r.ci_low),
            opt(r.ci_high),
            opt(r.p_value),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| ReportError::Io(e.into_error()))
}

/// Reads the analysis-set PAG CSV and writes the tables, JSON outputs and `bundle.json`.
/// Exits with a statistical failure when every selected risk model fails.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let pag_path = cfg.stage_dir(Stage::Predict).join("pag.csv");
    require(&pag_path, "PAG CSV")?;
    let rows = pag::load_pag_csv(&pag_path)?;
    let manifest = load_manifest(cfg)?;
    let preprocessed: HashSet<&str> = manifest.patients.iter().map(|p| p.patient_id.as_str()).collect();
    let csv_path = cfg.cohort_csv();
    require(&csv_path, "cohort CSV")?;
    let (records, _) = cohort::apply_inclusion_criteria(&cohort::read_cohort_csv(&csv_path)?, Some(&cfg.image_root()));
    let records: Vec<PatientRecord> =
        records.into_iter().filter(|r| preprocessed.contains(r.patient_id.as_str())).collect();

    let bundle = analyze_rows(cfg, &rows, &records)?;
    let prov = &bundle.provenance;
    let mut w = StageWriter::new(cfg, Stage::Analyze)?;
    w.write("table1.csv", bundle.table1.to_csv()?.as_bytes())?;
    w.write("table2.csv", bundle.table2.to_csv()?.as_bytes())?;
    w.write("odds_ratios.csv", &odds_ratio_csv(&bundle.odds_ratios)?)?;
    for (model, name) in [
        (ModelId::II, "roc_pag_model.json"),
        (ModelId::PiradsAdjusted, "roc_pirads_model.json"),
        (ModelId::Base, "roc_base_model.json"),
    ] {
        if let Some(r) = bundle.roc(model) {
            w.write_json(name, &WithProvenance { provenance: prov, body: r })?;
        }
    }
    if let Some(c) = &bundle.compare_auc {
        w.write_json("compare_auc.json", &WithProvenance { provenance: prov, body: c })?;
    }
    w.write_json("confusion.json", &Listing { provenance: prov, items: &bundle.confusion })?;
    w.write_json("group_pag.json", &Listing { provenance: prov, items: &bundle.groups })?;
    w.write_json("bundle.json", &bundle)?;
    w.finish()?;

    if bundle.odds_ratios.iter().all(|r| r.error.is_some()) {
        let msgs: Vec<String> = bundle.odds_ratios.iter().map(|r| format!("{}: {}", r.model, r.error.as_deref().unwrap_or(""))).collect();
        return Err(ReportError::AllModelsFailed(msgs.join("; ")));
    }
    Ok(())
}

pub fn load_bundle(cfg: &RunConfig) -> Result<AnalysisBundle> {
    super::read_json(&cfg.stage_dir(Stage::Analyze).join("bundle.json"), "analysis bundle")
}
