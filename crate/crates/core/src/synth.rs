//! Synthetic phantom cohorts with a known apparent-age signal.
//!
//! Each patient gets a disc-shaped gland that is constant across the gland
//! slices and carries a sinusoidal pattern whose period shrinks linearly with
//! apparent age. csPC patients look `cspc_age_shift` years older.

use crate::cohort::{self, BiopsyType, Gleason, Label, PatientRecord};
use crate::imaging::{self, FixtureDtype, ImagingError, Mask, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Cohort(#[from] cohort::CohortError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeSignal {
    /// Concentric rings centred on the gland.
    GlandRingWidth,
    /// A planar grating with a per-patient orientation.
    TextureFrequency,
}

/// Label-conditional clinical covariates; index 0 is ncsPC, 1 is csPC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateModel {
    pub psa_median: [f64; 2],
    pub psa_log_sd: f64,
    pub volume_mean: [f64; 2],
    pub volume_sd: f64,
    /// P(PI-RADS = 1..5) per label.
    pub pirads_probs: [[f64; 5]; 2],
}

impl Default for CovariateModel {
    fn default() -> Self {
        Self {
            psa_median: [6.0, 7.5],
            psa_log_sd: 0.55,
            volume_mean: [50.0, 44.0],
            volume_sd: 14.0,
            pirads_probs: [[0.15, 0.30, 0.30, 0.18, 0.07], [0.05, 0.12, 0.25, 0.33, 0.25]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub age_range: (f64, f64),
    /// Inclusive range of gland slices per patient.
    pub slices_per_patient: (usize, usize),
    /// In-plane side length in pixels.
    pub image_size: usize,
    /// Slices without gland above and below the gland.
    pub padding_slices: usize,
    pub gland_radius: f64,
    pub age_signal: AgeSignal,
    pub signal_strength: f64,
    /// Pattern period (pixels) at the lower end of `age_range`.
    pub period_at_min_age: f64,
    /// Period decrease per year of apparent age.
    pub period_slope: f64,
    pub cspc_fraction: f64,
    pub cspc_age_shift: f64,
    pub noise_sd: f64,
    /// Fraction of patients that also get a later follow-up visit row.
    pub followup_fraction: f64,
    pub covariates: CovariateModel,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 240,
            age_range: (50.0, 80.0),
            slices_per_patient: (4, 6),
            image_size: 32,
            padding_slices: 1,
            gland_radius: 13.0,
            age_signal: AgeSignal::GlandRingWidth,
            signal_strength: 1.0,
            period_at_min_age: 10.0,
            period_slope: 0.16,
            cspc_fraction: 0.3,
            cspc_age_shift: 5.0,
            noise_sd: 0.02,
            followup_fraction: 0.0,
            covariates: CovariateModel::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn period(&self, apparent_age: f64) -> f64 {
        self.period_at_min_age - self.period_slope * (apparent_age - self.age_range.0)
    }

    /// Inverse of [`SynthConfig::period`].
    pub fn age_from_period(&self, period: f64) -> f64 {
        self.age_range.0 + (self.period_at_min_age - period) / self.period_slope
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let (lo, hi) = self.age_range;
        if self.n_patients == 0 {
            return bad("n_patients must be positive".into());
        }
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("age_range {:?}", self.age_range));
        }
        let (smin, smax) = self.slices_per_patient;
        if smin == 0 || smin > smax {
            return bad(format!("slices_per_patient {:?}", self.slices_per_patient));
        }
        if !(0.0..=1.0).contains(&self.cspc_fraction) || !(0.0..=1.0).contains(&self.followup_fraction) {
            return bad("fractions must lie in [0, 1]".into());
        }
        if !(self.signal_strength >= 0.0) || !(self.noise_sd >= 0.0) {
            return bad("signal_strength and noise_sd must be ≥ 0".into());
        }
        if self.image_size < 8 || !(self.gland_radius >= 2.0) || 2.0 * self.gland_radius + 4.0 > self.image_size as f64 {
            return bad(format!("gland radius {} does not fit a {} px image", self.gland_radius, self.image_size));
        }
        if !(self.period_slope > 0.0) {
            return bad("period_slope must be positive".into());
        }
        let oldest = hi + self.cspc_age_shift.max(0.0);
        let youngest = lo + self.cspc_age_shift.min(0.0);
        if self.period(oldest) <= 2.0 || self.period(youngest) <= 2.0 {
            return bad(format!("pattern period {:.3} px at age {oldest} is at or below the sampling limit", self.period(oldest)));
        }
        let cm = &self.covariates;
        for probs in &cm.pirads_probs {
            if probs.iter().any(|&p| p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("PI-RADS probabilities must be a distribution".into());
            }
        }
        if cm.psa_median.iter().any(|&m| !(m > 0.0)) || !(cm.psa_log_sd >= 0.0) || !(cm.volume_sd >= 0.0) {
            return bad("covariate model parameters out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub label: Label,
    pub chronological_age: f64,
    pub apparent_age: f64,
    pub period: f64,
    pub volume: Volume,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    /// Clinical rows in cohort CSV order, including any follow-up visits.
    pub records: Vec<PatientRecord>,
    pub patients: Vec<SyntheticPatient>,
}

pub fn patient_id(i: usize) -> String {
    format!("SYN{:04}", i + 1)
}

pub fn volume_path(id: &str) -> String {
    format!("images/{id}_t2w.json")
}

pub fn mask_path(id: &str) -> String {
    format!("images/{id}_mask.json")
}

/// Pattern value at pixel `(x, y)` before contrast scaling, in [−1, 1].
fn pattern(signal: AgeSignal, x: f64, y: f64, centre: (f64, f64), period: f64, theta: f64, phase: f64) -> f64 {
    let (dx, dy) = (x - centre.0, y - centre.1);
    let t = match signal {
        AgeSignal::GlandRingWidth => (dx * dx + dy * dy).sqrt(),
        AgeSignal::TextureFrequency => dx * theta.cos() + dy * theta.sin(),
    };
    (2.0 * PI * t / period + phase).cos()
}

const BACKGROUND: f64 = 0.15;
const GLAND: f64 = 0.5;
const CONTRAST: f64 = 0.25;

fn draw_patient(cfg: &SynthConfig, i: usize) -> Result<(SyntheticPatient, PatientRecord)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let label = if rng.random::<f64>() < cfg.cspc_fraction { Label::CsPC } else { Label::NcsPC };
    let chronological_age = rng.random_range(cfg.age_range.0..cfg.age_range.1);
    let apparent_age = chronological_age + if label == Label::CsPC { cfg.cspc_age_shift } else { 0.0 };
    let period = cfg.period(apparent_age);
    let n_gland = rng.random_range(cfg.slices_per_patient.0..=cfg.slices_per_patient.1);
    let nz = n_gland + 2 * cfg.padding_slices;
    let n = cfg.image_size;
    // integer offsets keep the disc symmetric about its centre on the pixel grid
    let slack = ((n as f64 - 1.0) / 2.0 - cfg.gland_radius - 1.0).floor().max(0.0) as i64;
    let shift = slack.min(2);
    let centre = (
        (n as f64 - 1.0) / 2.0 + rng.random_range(-shift..=shift) as f64,
        (n as f64 - 1.0) / 2.0 + rng.random_range(-shift..=shift) as f64,
    );
    let theta = rng.random_range(0.0..PI);
    let noise = Normal::new(0.0, cfg.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut voxels = Vec::with_capacity(n * n * nz);
    let mut mask = Vec::with_capacity(n * n * nz);
    for z in 0..nz {
        let gland_slice = z >= cfg.padding_slices && z < cfg.padding_slices + n_gland;
        let phase = rng.random_range(0.0..2.0 * PI);
        for y in 0..n {
            for x in 0..n {
                let (xf, yf) = (x as f64, y as f64);
                let inside = gland_slice && (xf - centre.0).hypot(yf - centre.1) <= cfg.gland_radius;
                let mut v = if inside {
                    GLAND + CONTRAST * cfg.signal_strength * pattern(cfg.age_signal, xf, yf, centre, period, theta, phase)
                } else {
                    BACKGROUND
                };
                if cfg.noise_sd > 0.0 {
                    v += noise.sample(&mut rng);
                }
                voxels.push(v);
                mask.push(u8::from(inside));
            }
        }
    }
    let id = patient_id(i);
    let dims = [n, n, nz];
    let volume = Volume::new(id.clone(), dims, [0.5, 0.5, 3.0], voxels)?;
    let mask = Mask::new(dims, mask)?;

    let cm = &cfg.covariates;
    let k = usize::from(label == Label::CsPC);
    let psa = LogNormal::new(cm.psa_median[k].ln(), cm.psa_log_sd.max(f64::MIN_POSITIVE)).expect("valid").sample(&mut rng);
    let vol_draw: f64 = Normal::new(cm.volume_mean[k], cm.volume_sd.max(f64::MIN_POSITIVE)).expect("valid").sample(&mut rng);
    let prostate_volume = vol_draw.max(15.0);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pirads = 5u8;
    for (j, p) in cm.pirads_probs[k].iter().enumerate() {
        acc += p;
        if u < acc {
            pirads = j as u8 + 1;
            break;
        }
    }
    let gleason = match label {
        Label::CsPC => Gleason::Score(*[7u8, 7, 7, 8, 9].get(rng.random_range(0..5)).unwrap()),
        Label::NcsPC if rng.random::<bool>() => Gleason::Negative,
        Label::NcsPC => Gleason::Score(6),
    };
    let biopsy_type = BiopsyType::ALL[rng.random_range(0..3)];
    let record = PatientRecord {
        patient_id: id.clone(),
        visit_index: 0,
        chronological_age: Some(chronological_age),
        psa: Some(psa),
        prostate_volume: Some(prostate_volume),
        psad: Some(psa / prostate_volume),
        pirads: Some(pirads),
        biopsy_type: Some(biopsy_type),
        gleason: Some(gleason),
        volume_path: Some(volume_path(&id)),
        mask_path: Some(mask_path(&id)),
    };
    let patient = SyntheticPatient { patient_id: id, label, chronological_age, apparent_age, period, volume, mask };
    Ok((patient, record))
}

/// Deterministic in `cfg.seed`; patient `i` draws from its own random stream.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let drawn: Vec<(SyntheticPatient, PatientRecord)> =
        (0..cfg.n_patients).into_par_iter().map(|i| draw_patient(cfg, i)).collect::<Result<_>>()?;
    let mut followup_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_F011_0000_0001);
    let mut records = Vec::with_capacity(drawn.len());
    let mut patients = Vec::with_capacity(drawn.len());
    for (p, r) in drawn {
        let followup = followup_rng.random::<f64>() < cfg.followup_fraction;
        if followup {
            records.push(PatientRecord {
                visit_index: 1,
                chronological_age: r.chronological_age.map(|a| a + 1.0),
                ..r.clone()
            });
        }
        records.push(r);
        patients.push(p);
    }
    Ok(SyntheticCohort { records, patients })
}

/// Writes `cohort.csv`, `ground_truth.csv` and `images/` under `dir`.
pub fn write_cohort(cohort: &SyntheticCohort, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("images"))?;
    cohort::write_cohort_csv(&cohort.records, &dir.join("cohort.csv"))?;
    let mut gt = String::from("patient_id,label,chronological_age,apparent_age,period\n");
    for p in &cohort.patients {
        gt.push_str(&format!("{},{},{},{},{}\n", p.patient_id, p.label, p.chronological_age, p.apparent_age, p.period));
        imaging::write_fixture(&dir.join(volume_path(&p.patient_id)), &p.volume, FixtureDtype::F32)?;
        let mask = p.mask.to_volume(&p.patient_id, p.volume.spacing)?;
        imaging::write_fixture(&dir.join(mask_path(&p.patient_id)), &mask, FixtureDtype::U8)?;
    }
    std::fs::write(dir.join("ground_truth.csv"), gt)?;
    Ok(())
}

/// Least-squares fit of `a + b·cos(ω t) + c·sin(ω t)`; returns the residual sum of squares.
fn sinusoid_rss(t: &[f64], v: &[f64], omega: f64) -> f64 {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (&ti, &vi) in t.iter().zip(v) {
        let row = [1.0, (omega * ti).cos(), (omega * ti).sin()];
        for r in 0..3 {
            atb[r] += row[r] * vi;
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|r, c| ata[r][c]);
    let Some(coef) = m.lu().solve(&nalgebra::Vector3::from(atb)) else {
        return f64::INFINITY;
    };
    t.iter()
        .zip(v)
        .map(|(&ti, &vi)| {
            let fit = coef[0] + coef[1] * (omega * ti).cos() + coef[2] * (omega * ti).sin();
            (vi - fit).powi(2)
        })
        .sum()
}

/// Golden-section refinement of a unimodal function on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Estimates the pattern period of one gland slice by least squares over
/// candidate periods between 2 and `max_period` pixels.
pub fn decode_period(signal: AgeSignal, pixels: &[f64], mask: &[u8], n: usize, max_period: f64) -> Option<f64> {
    let pts: Vec<(f64, f64, f64)> = (0..n * n)
        .filter(|&i| mask[i] != 0)
        .map(|i| ((i % n) as f64, (i / n) as f64, pixels[i]))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let v: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let project = |theta: f64| -> Vec<f64> {
        pts.iter()
            .map(|p| match signal {
                AgeSignal::GlandRingWidth => (p.0 - cx).hypot(p.1 - cy),
                AgeSignal::TextureFrequency => (p.0 - cx) * theta.cos() + (p.1 - cy) * theta.sin(),
            })
            .collect()
    };
    let omega_lo = 2.0 * PI / max_period;
    let omega_hi = PI;
    let steps = match signal {
        AgeSignal::GlandRingWidth => 400,
        AgeSignal::TextureFrequency => 120,
    };
    let grid = |k: usize| omega_lo + (omega_hi - omega_lo) * k as f64 / steps as f64;
    let thetas: Vec<f64> = match signal {
        AgeSignal::GlandRingWidth => vec![0.0],
        AgeSignal::TextureFrequency => (0..60).map(|k| k as f64 * PI / 60.0).collect(),
    };
    let mut best = (f64::INFINITY, 0.0, 0);
    for &theta in &thetas {
        let t = project(theta);
        for k in 0..=steps {
            let rss = sinusoid_rss(&t, &v, grid(k));
            if rss < best.0 {
                best = (rss, theta, k);
            }
        }
    }
    let (_, mut theta, k) = best;
    let (lo, hi) = (grid(k.saturating_sub(1)), grid((k + 1).min(steps)));
    let mut omega = golden_min(|w| sinusoid_rss(&project(theta), &v, w), lo, hi, 60);
    if signal == AgeSignal::TextureFrequency {
        let step = PI / 60.0;
        let dw = (omega_hi - omega_lo) / steps as f64;
        for _ in 0..3 {
            theta = golden_min(|th| sinusoid_rss(&project(th), &v, omega), theta - step, theta + step, 40);
            omega = golden_min(|w| sinusoid_rss(&project(theta), &v, w), omega - dw, omega + dw, 50);
        }
    }
    Some(2.0 * PI / omega)
}

/// Closed-form apparent-age estimate: decode the period of every gland slice,
/// average, and invert the period–age line.
pub fn decode_apparent_age(cfg: &SynthConfig, volume: &Volume, mask: &Mask) -> Option<f64> {
    let n = volume.dims[0];
    let plane = n * volume.dims[1];
    let max_period = cfg.period(cfg.age_range.0 + cfg.cspc_age_shift.min(0.0) - 10.0);
    let periods: Vec<f64> = (0..volume.dims[2])
        .filter(|&z| mask.slice_nonzero(z))
        .filter_map(|z| {
            decode_period(cfg.age_signal, volume.slice(z), &mask.voxels[z * plane..(z + 1) * plane], n, max_period)
        })
        .collect();
    if periods.is_empty() {
        return None;
    }
    Some(cfg.age_from_period(periods.iter().sum::<f64>() / periods.len() as f64))
}
