//! Clinical records, study inclusion rules, csPC labelling, patient-level
//! splits and baseline-characteristics tables.

use crate::stats::{self, MwuMode, PermutationStatistic, TestResult};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("record {0} has no Gleason grade")]
    MissingGleason(String),
    #[error("duplicate patient id `{0}`")]
    DuplicateIds(String),
    #[error("need at least {needed} patients, got {got}")]
    TooFewPatients { needed: usize, got: usize },
    #[error("invalid split fraction {0}")]
    InvalidFraction(f64),
    #[error("patient `{0}` appears on both sides of a split")]
    PatientLeakage(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("cohort CSV line {line}: bad `{field}` value {value:?}")]
    Parse { line: usize, field: &'static str, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CohortError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiopsyType {
    Systematic,
    MRIGuided,
    MRIPlusSystematic,
}

impl BiopsyType {
    pub const ALL: [BiopsyType; 3] = [BiopsyType::Systematic, BiopsyType::MRIGuided, BiopsyType::MRIPlusSystematic];

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['_', ' ', '-', '(', ')'], "").as_str() {
            "systematic" => Some(BiopsyType::Systematic),
            "mriguided" | "mri" => Some(BiopsyType::MRIGuided),
            "mriplussystematic" | "mri+systematic" => Some(BiopsyType::MRIPlusSystematic),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiopsyType::Systematic => "Systematic",
            BiopsyType::MRIGuided => "MRIGuided",
            BiopsyType::MRIPlusSystematic => "MRIPlusSystematic",
        }
    }

    fn display(self) -> &'static str {
        match self {
            BiopsyType::Systematic => "Systematic",
            BiopsyType::MRIGuided => "MRI guided",
            BiopsyType::MRIPlusSystematic => "MRI (+Systematic)",
        }
    }
}

/// Biopsy histopathology: a Gleason sum or a negative examination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gleason {
    Negative,
    Score(u8),
}

impl Gleason {
    /// Accepts `negative`, a sum such as `7`, or a pattern pair such as `3+4`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("negative") || s.eq_ignore_ascii_case("neg") {
            return Some(Gleason::Negative);
        }
        if let Some((a, b)) = s.split_once('+') {
            let (a, b): (u8, u8) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            return Some(Gleason::Score(a + b));
        }
        s.parse().ok().map(Gleason::Score)
    }
}

impl fmt::Display for Gleason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gleason::Negative => f.write_str("Negative"),
            Gleason::Score(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ncsPC")]
    NcsPC,
    #[serde(rename = "csPC")]
    CsPC,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::CsPC => "csPC",
            Label::NcsPC => "ncsPC",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One clinical/demographic row. Optional fields are missing cells in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub visit_index: u32,
    pub chronological_age: Option<f64>,
    pub psa: Option<f64>,
    pub prostate_volume: Option<f64>,
    pub psad: Option<f64>,
    pub pirads: Option<u8>,
    pub biopsy_type: Option<BiopsyType>,
    pub gleason: Option<Gleason>,
    pub volume_path: Option<String>,
    pub mask_path: Option<String>,
}

impl PatientRecord {
    pub fn age(&self) -> f64 {
        self.chronological_age.unwrap_or(f64::NAN)
    }

    pub fn pirads_ge3(&self) -> Option<bool> {
        self.pirads.map(|p| p >= 3)
    }

    pub fn image_paths(&self, root: &Path) -> Option<(PathBuf, PathBuf)> {
        Some((root.join(self.volume_path.as_ref()?), root.join(self.mask_path.as_ref()?)))
    }
}

pub const COHORT_HEADER: [&str; 11] = [
    "patient_id", "visit_index", "age", "psa", "volume_ml", "psad", "pirads", "biopsy_type", "gleason",
    "volume_path", "mask_path",
];

fn opt<T: std::str::FromStr>(cell: &str, line: usize, field: &'static str) -> Result<Option<T>> {
    let c = cell.trim();
    if c.is_empty() {
        return Ok(None);
    }
    c.parse()
        .map(Some)
        .map_err(|_| CohortError::Parse { line, field, value: c.to_string() })
}

fn opt_text(cell: &str) -> Option<String> {
    let c = cell.trim();
    (!c.is_empty()).then(|| c.to_string())
}

pub fn read_cohort_csv(path: &Path) -> Result<Vec<PatientRecord>> {
    read_cohort(std::fs::File::open(path)?)
}

pub fn read_cohort<R: std::io::Read>(reader: R) -> Result<Vec<PatientRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let idx: Vec<Option<usize>> = COHORT_HEADER.iter().map(|h| col(h)).collect();
    if idx[0].is_none() {
        return Err(CohortError::Parse { line: 1, field: "patient_id", value: "missing column".into() });
    }
    let mut out = vec![];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cell = |k: usize| idx[k].and_then(|j| rec.get(j)).unwrap_or("");
        let biopsy_type = match opt_text(cell(7)) {
            None => None,
            Some(s) => Some(BiopsyType::parse(&s).ok_or(CohortError::Parse { line, field: "biopsy_type", value: s })?),
        };
        let gleason = match opt_text(cell(8)) {
            None => None,
            Some(s) => Some(Gleason::parse(&s).ok_or(CohortError::Parse { line, field: "gleason", value: s })?),
        };
        out.push(PatientRecord {
            patient_id: cell(0).trim().to_string(),
            visit_index: opt(cell(1), line, "visit_index")?.unwrap_or(0),
            chronological_age: opt(cell(2), line, "age")?,
            psa: opt(cell(3), line, "psa")?,
            prostate_volume: opt(cell(4), line, "volume_ml")?,
            psad: opt(cell(5), line, "psad")?,
            pirads: opt(cell(6), line, "pirads")?,
            biopsy_type,
            gleason,
            volume_path: opt_text(cell(9)),
            mask_path: opt_text(cell(10)),
        });
    }
    Ok(out)
}

fn cell_f64(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_cohort<W: std::io::Write>(records: &[PatientRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COHORT_HEADER)?;
    for r in records {
        w.write_record([
            r.patient_id.clone(),
            r.visit_index.to_string(),
            cell_f64(r.chronological_age),
            cell_f64(r.psa),
            cell_f64(r.prostate_volume),
            cell_f64(r.psad),
            r.pirads.map(|p| p.to_string()).unwrap_or_default(),
            r.biopsy_type.map(|b| b.as_str().to_string()).unwrap_or_default(),
            r.gleason.map(|g| g.to_string()).unwrap_or_default(),
            r.volume_path.clone().unwrap_or_default(),
            r.mask_path.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cohort_csv(records: &[PatientRecord], path: &Path) -> Result<()> {
    write_cohort(records, std::fs::File::create(path)?)
}

/// Drop reasons tallied by [`apply_inclusion_criteria`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionReason {
    NonBaselineVisit,
    DuplicateVisit,
    MissingDemographic,
    MissingClinical,
    MissingAnnotation,
    FaultyAnnotation,
    UnresolvableImages,
}

impl ExclusionReason {
    pub fn key(self) -> &'static str {
        match self {
            ExclusionReason::NonBaselineVisit => "non_baseline_visit",
            ExclusionReason::DuplicateVisit => "duplicate_visit",
            ExclusionReason::MissingDemographic => "missing_demographic",
            ExclusionReason::MissingClinical => "missing_clinical",
            ExclusionReason::MissingAnnotation => "missing_annotation",
            ExclusionReason::FaultyAnnotation => "faulty_annotation",
            ExclusionReason::UnresolvableImages => "unresolvable_images",
        }
    }
}

/// Reason → count; serialises as a flat JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport(pub BTreeMap<String, usize>);

impl ExclusionReport {
    fn tally(&mut self, r: ExclusionReason) {
        *self.0.entry(r.key().to_string()).or_default() += 1;
    }

    pub fn count(&self, r: ExclusionReason) -> usize {
        self.0.get(r.key()).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

fn screen(r: &PatientRecord) -> std::result::Result<(), ExclusionReason> {
    use ExclusionReason::*;
    if r.chronological_age.is_none() {
        return Err(MissingDemographic);
    }
    if r.psa.is_none() || r.prostate_volume.is_none() || r.gleason.is_none() {
        return Err(MissingClinical);
    }
    if r.volume_path.is_none() || r.mask_path.is_none() {
        return Err(MissingAnnotation);
    }
    let (age, psa, vol) = (r.age(), r.psa.unwrap(), r.prostate_volume.unwrap());
    let faulty = !(age > 0.0 && age.is_finite())
        || !(psa >= 0.0 && psa.is_finite())
        || !(vol > 0.0 && vol.is_finite())
        || r.pirads.is_some_and(|p| !(1..=5).contains(&p))
        || matches!(r.gleason, Some(Gleason::Score(s)) if !(2..=10).contains(&s))
        || r.psad.is_some_and(|d| (d - psa / vol).abs() > 1e-6 * d.abs().max(1.0));
    if faulty {
        return Err(FaultyAnnotation);
    }
    Ok(())
}

/// Keeps one baseline (earliest) visit per patient with complete, consistent
/// fields. When `image_root` is given the image pair must also exist on disk.
/// PSAd is filled in from PSA / volume where absent.
pub fn apply_inclusion_criteria(
    records: &[PatientRecord],
    image_root: Option<&Path>,
) -> (Vec<PatientRecord>, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let mut baseline: HashMap<&str, (u32, usize)> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        baseline
            .entry(r.patient_id.as_str())
            .and_modify(|b| {
                if r.visit_index < b.0 {
                    *b = (r.visit_index, i);
                }
            })
            .or_insert((r.visit_index, i));
    }
    let mut kept = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let (first_visit, chosen) = baseline[r.patient_id.as_str()];
        if r.visit_index > first_visit {
            report.tally(ExclusionReason::NonBaselineVisit);
            continue;
        }
        if i != chosen {
            report.tally(ExclusionReason::DuplicateVisit);
            continue;
        }
        if let Err(reason) = screen(r) {
            report.tally(reason);
            continue;
        }
        if let Some(root) = image_root {
            let (v, m) = r.image_paths(root).expect("screened");
            let resolvable = |p: &Path| p.exists() || p.with_extension("json").exists();
            if !resolvable(&v) || !resolvable(&m) {
                report.tally(ExclusionReason::UnresolvableImages);
                continue;
            }
        }
        let mut r = r.clone();
        if r.psad.is_none() {
            r.psad = Some(r.psa.unwrap() / r.prostate_volume.unwrap());
        }
        kept.push(r);
    }
    (kept, report)
}

/// csPC iff Gleason ≥ 7; Gleason ≤ 6 and negative biopsies are ncsPC.
pub fn assign_label(r: &PatientRecord) -> Result<Label> {
    match r.gleason {
        None => Err(CohortError::MissingGleason(r.patient_id.clone())),
        Some(Gleason::Score(s)) if s >= 7 => Ok(Label::CsPC),
        Some(_) => Ok(Label::NcsPC),
    }
}

/// Patient-level partition into train/test ids plus cross-validation folds of the train ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub folds: Vec<Vec<String>>,
    pub seed: u64,
}

impl SplitAssignment {
    /// Checks disjointness, fold coverage and fold balance.
    pub fn validate(&self) -> Result<()> {
        let train: HashSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        if train.len() != self.train_ids.len() {
            return Err(CohortError::InvalidSplit("duplicate train id".into()));
        }
        if let Some(id) = self.test_ids.iter().find(|id| train.contains(id.as_str())) {
            return Err(CohortError::PatientLeakage(id.clone()));
        }
        if self.folds.is_empty() {
            return Ok(());
        }
        let mut seen = HashSet::new();
        for id in self.folds.iter().flatten() {
            if !seen.insert(id.as_str()) {
                return Err(CohortError::PatientLeakage(id.clone()));
            }
            if !train.contains(id.as_str()) {
                return Err(CohortError::InvalidSplit(format!("fold id `{id}` is not a train id")));
            }
        }
        if seen.len() != train.len() {
            return Err(CohortError::InvalidSplit("folds do not cover the train ids".into()));
        }
        let sizes = self.folds.iter().map(Vec::len);
        let (lo, hi) = sizes.fold((usize::MAX, 0), |(a, b), s| (a.min(s), b.max(s)));
        if hi - lo > 1 {
            return Err(CohortError::InvalidSplit(format!("fold sizes range {lo}..{hi}")));
        }
        Ok(())
    }
}

fn shuffled_unique(ids: &[String], seed: u64) -> Result<Vec<String>> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(CohortError::DuplicateIds(w[0].clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    Ok(sorted)
}

/// Seeded shuffle, then the first ⌊fraction · n⌋ ids go to train.
pub fn split_train_test(ids: &[String], fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CohortError::InvalidFraction(fraction));
    }
    let order = shuffled_unique(ids, seed)?;
    let n_train = (fraction * order.len() as f64 + 1e-9).floor() as usize;
    let (train, test) = order.split_at(n_train);
    Ok(SplitAssignment { train_ids: train.to_vec(), test_ids: test.to_vec(), folds: vec![], seed })
}

/// `k` disjoint folds whose sizes differ by at most one (larger folds first).
pub fn make_cv_folds(train_ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 || train_ids.len() < k {
        return Err(CohortError::TooFewPatients { needed: k.max(2), got: train_ids.len() });
    }
    let order = shuffled_unique(train_ids, seed)?;
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum ContinuousTest {
    Welch,
    MannWhitney,
    Permutation { n_perm: usize, seed: u64 },
}

impl Default for ContinuousTest {
    fn default() -> Self {
        ContinuousTest::Welch
    }
}

/// Which test supplies the between-group p value for each variable kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestMapping {
    pub continuous: ContinuousTest,
    /// Per-variable override keyed by characteristic name.
    #[serde(default)]
    pub overrides: BTreeMap<String, ContinuousTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub characteristic: String,
    /// Category level for count rows; `None` for continuous rows and category headers.
    pub level: Option<String>,
    pub cells: Vec<String>,
    pub p_value: Option<f64>,
    pub test: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    /// Column headers such as `ncsPC (N = 142)`.
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl TableSummary {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        let mut header = vec!["characteristic".to_string(), "level".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(["p_value".to_string(), "test".to_string()]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.characteristic.clone(), r.level.clone().unwrap_or_default()];
            rec.extend(r.cells.iter().cloned());
            rec.push(r.p_value.map(format_p).unwrap_or_default());
            rec.push(r.test.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }

    pub fn row(&self, characteristic: &str, level: Option<&str>) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.characteristic == characteristic && r.level.as_deref() == level)
    }
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn mean_sd_cell(x: &[f64], decimals: usize) -> String {
    if x.is_empty() {
        return "-".to_string();
    }
    format!("{:.*} ± {:.*}", decimals, stats::mean(x), decimals, stats::sample_sd(x))
}

/// `N (%)` with the percentage truncated (not rounded) to two decimals.
fn count_cell(k: usize, n: usize) -> String {
    if n == 0 {
        return format!("{k} (-)");
    }
    let hundredths = k * 10_000 / n;
    format!("{k} ({}.{:02})", hundredths / 100, hundredths % 100)
}

fn continuous_p(test: ContinuousTest, a: &[f64], b: &[f64]) -> Option<TestResult> {
    match test {
        ContinuousTest::Welch => stats::welch_t_test(a, b).ok(),
        ContinuousTest::MannWhitney => stats::mann_whitney_u(a, b, MwuMode::Auto).ok(),
        ContinuousTest::Permutation { n_perm, seed } => {
            stats::permutation_test(a, b, PermutationStatistic::MeanDiff, n_perm, seed).ok()
        }
    }
}

/// Baseline characteristics: mean ± SD (sample SD) for continuous variables,
/// N (%) for categorical ones. With `grouped`, columns are ncsPC then csPC and
/// each variable carries a between-group p value.
pub fn baseline_table(
    records: &[PatientRecord],
    pags: Option<&HashMap<String, f64>>,
    grouped: bool,
    mapping: &TestMapping,
) -> Result<TableSummary> {
    let groups: Vec<(String, Vec<&PatientRecord>)> = if grouped {
        let mut g: BTreeMap<Label, Vec<&PatientRecord>> = BTreeMap::new();
        for r in records {
            g.entry(assign_label(r)?).or_default().push(r);
        }
        [Label::NcsPC, Label::CsPC]
            .into_iter()
            .map(|l| (l.as_str().to_string(), g.remove(&l).unwrap_or_default()))
            .collect()
    } else {
        vec![("All".to_string(), records.iter().collect())]
    };
    let columns = groups.iter().map(|(name, rs)| format!("{name} (N = {})", rs.len())).collect();
    let mut rows = Vec::new();

    let mut continuous = |name: &str, decimals: usize, get: &dyn Fn(&PatientRecord) -> Option<f64>| {
        let samples: Vec<Vec<f64>> = groups.iter().map(|(_, rs)| rs.iter().filter_map(|r| get(r)).collect()).collect();
        let test = mapping.overrides.get(name).copied().unwrap_or(mapping.continuous);
        let result = (grouped && samples.len() == 2).then(|| continuous_p(test, &samples[0], &samples[1])).flatten();
        rows.push(TableRow {
            characteristic: name.to_string(),
            level: None,
            cells: samples.iter().map(|s| mean_sd_cell(s, decimals)).collect(),
            p_value: result.as_ref().map(|t| t.p_value),
            test: result.map(|t| t.method),
        });
    };
    continuous("Age (years)", 2, &|r| r.chronological_age);
    if let Some(pags) = pags {
        continuous("PAG (years)", 2, &|r| pags.get(&r.patient_id).copied());
    }
    continuous("PSA (ng/mL)", 2, &|r| r.psa);
    continuous("Prostate volume (mL)", 2, &|r| r.prostate_volume);
    continuous("PSAd (ng/mL²)", 3, &|r| r.psad);

    let categorical = |rows: &mut Vec<TableRow>, name: &str, levels: &[&str], get: &dyn Fn(&PatientRecord) -> Option<usize>| {
        let counts: Vec<Vec<usize>> = groups
            .iter()
            .map(|(_, rs)| {
                let mut c = vec![0; levels.len()];
                for r in rs {
                    if let Some(k) = get(r) {
                        c[k] += 1;
                    }
                }
                c
            })
            .collect();
        let result = (grouped && counts.len() == 2)
            .then(|| {
                let table: Vec<Vec<f64>> = counts.iter().map(|c| c.iter().map(|&v| v as f64).collect()).collect();
                stats::chi_square_test(&table, levels.len() == 2).ok()
            })
            .flatten();
        rows.push(TableRow {
            characteristic: name.to_string(),
            level: None,
            cells: vec!["-".to_string(); groups.len()],
            p_value: result.as_ref().map(|t| t.p_value),
            test: result.map(|t| t.method),
        });
        for (k, level) in levels.iter().enumerate() {
            rows.push(TableRow {
                characteristic: name.to_string(),
                level: Some(level.to_string()),
                cells: counts.iter().map(|c| count_cell(c[k], c.iter().sum())).collect(),
                p_value: None,
                test: None,
            });
        }
    };
    let yes_no = |b: bool| if b { 0 } else { 1 };
    categorical(&mut rows, "PSA > 3 ng/mL", &["Yes", "No"], &|r| r.psa.map(|p| yes_no(p > 3.0)));
    categorical(&mut rows, "PI-RADS ≥ 3", &["Yes", "No"], &|r| r.pirads_ge3().map(yes_no));
    let biopsy_levels: Vec<&str> = BiopsyType::ALL.iter().map(|b| b.display()).collect();
    categorical(&mut rows, "Biopsy Type", &biopsy_levels, &|r| {
        r.biopsy_type.map(|b| BiopsyType::ALL.iter().position(|x| *x == b).unwrap())
    });
    Ok(TableSummary { columns, rows })
}

/// Ids in `a` that are also in `b`.
pub fn overlapping_ids<'a>(a: &'a [String], b: &[String]) -> BTreeSet<&'a str> {
    let b: HashSet<&str> = b.iter().map(String::as_str).collect();
    a.iter().map(String::as_str).filter(|id| b.contains(id)).collect()
}
