use super::network::{ModelConfig, Network, Weights};
use super::{RegressorError, Result};
use crate::imaging::SliceSample;
use crate::stats;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationMode {
    /// Multiples of 90°: exact pixel permutations.
    QuarterTurns,
    /// Uniform angle in ±`max_degrees`, bilinear resampling with edge clamping.
    Arbitrary { max_degrees: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augment_probability: f64,
    pub rotation: RotationMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            batch_size: 32,
            learning_rate: 1e-2,
            augment_probability: 0.5,
            rotation: RotationMode::QuarterTurns,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(RegressorError::InvalidConfig("epochs and batch_size must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.augment_probability) {
            return Err(RegressorError::InvalidConfig(format!("augment_probability {}", self.augment_probability)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RegressorError::InvalidConfig(format!("learning_rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Running MAE (years) over the augmented training batches of the epoch.
    pub train_mae: f64,
    /// Slice-level MAE (years) on the validation slices after the epoch.
    pub val_mae: f64,
}

/// Best-validation checkpoint of one cross-validation fold.
///
/// The network is trained on standardized targets `(age − target_mean) / target_sd`;
/// predictions are mapped back to years.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub fold_index: usize,
    pub config: ModelConfig,
    pub best_weights: Weights,
    pub best_val_mae: f64,
    pub epoch_of_best: usize,
    pub target_mean: f64,
    pub target_sd: f64,
    pub trace: Vec<EpochStats>,
}

impl FoldModel {
    pub fn network(&self) -> Result<Network> {
        Network::new(&self.config)
    }

    pub fn predict(&self, net: &Network, pixels: &[f64]) -> Result<f64> {
        Ok(self.target_mean + self.target_sd * net.forward(&self.best_weights, pixels)?)
    }

    pub fn predict_slices(&self, slices: &[SliceSample]) -> Result<Vec<f64>> {
        let net = self.network()?;
        slices.iter().map(|s| self.predict(&net, &s.pixels)).collect()
    }
}

pub fn loss_mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(RegressorError::EmptyBatch);
    }
    if preds.len() != targets.len() {
        return Err(RegressorError::ShapeMismatch { expected: preds.len(), got: targets.len() });
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

fn rotate_quarter(px: &[f64], n: usize, turns: usize) -> Vec<f64> {
    let mut out = px.to_vec();
    for _ in 0..turns % 4 {
        let src = out.clone();
        // 90° counter-clockwise: (x, y) → (y, n − 1 − x)
        for y in 0..n {
            for x in 0..n {
                out[(n - 1 - x) * n + y] = src[y * n + x];
            }
        }
    }
    out
}

fn rotate_bilinear(px: &[f64], n: usize, degrees: f64) -> Vec<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    let centre = (n as f64 - 1.0) / 2.0;
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, n as isize - 1) as usize;
        let cy = y.clamp(0, n as isize - 1) as usize;
        px[cy * n + cx]
    };
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 - centre, y as f64 - centre);
            let sx = (c * dx + s * dy + centre).clamp(0.0, n as f64 - 1.0);
            let sy = (-s * dx + c * dy + centre).clamp(0.0, n as f64 - 1.0);
            let (x0, y0) = (sx.floor() as isize, sy.floor() as isize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out[y * n + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

fn flip(px: &[f64], n: usize, horizontal: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (sx, sy) = if horizontal { (n - 1 - x, y) } else { (x, n - 1 - y) };
            out[y * n + x] = px[sy * n + sx];
        }
    }
    out
}

/// With probability `p` rotates the slice and, independently with probability
/// `p`, flips it horizontally or vertically (even odds).
pub fn augment<R: Rng>(s: &SliceSample, p: f64, rotation: RotationMode, rng: &mut R) -> SliceSample {
    let n = s.size;
    let mut px = s.pixels.clone();
    if rng.random::<f64>() < p {
        px = match rotation {
            RotationMode::QuarterTurns => rotate_quarter(&px, n, rng.random_range(1..=3)),
            RotationMode::Arbitrary { max_degrees } => {
                let a = if max_degrees > 0.0 { rng.random_range(-max_degrees..=max_degrees) } else { 0.0 };
                rotate_bilinear(&px, n, a)
            }
        };
    }
    if rng.random::<f64>() < p {
        px = flip(&px, n, rng.random::<bool>());
    }
    SliceSample { pixels: px, ..s.clone() }
}

fn check_leakage(train: &[SliceSample], val: &[SliceSample]) -> Result<()> {
    let ids: HashSet<&str> = train.iter().map(|s| s.patient_id.as_str()).collect();
    match val.iter().find(|s| ids.contains(s.patient_id.as_str())) {
        Some(s) => Err(RegressorError::PatientLeakage(s.patient_id.clone())),
        None => Ok(()),
    }
}

fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64);
    rng
}

/// Minibatch gradient descent on MAE with online augmentation, keeping the
/// weights of the epoch with the lowest validation MAE.
pub fn train_fold(cfg: &ModelConfig, tc: &TrainConfig, train: &[SliceSample], val: &[SliceSample]) -> Result<FoldModel> {
    train_fold_indexed(cfg, tc, train, val, 0)
}

fn train_fold_indexed(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    train: &[SliceSample],
    val: &[SliceSample],
    fold_index: usize,
) -> Result<FoldModel> {
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(RegressorError::NoSlices);
    }
    check_leakage(train, val)?;
    let net = Network::new(cfg)?;
    let expected = cfg.input_size * cfg.input_size;
    if let Some(s) = train.iter().chain(val).find(|s| s.pixels.len() != expected || s.size != cfg.input_size) {
        return Err(RegressorError::ShapeMismatch { expected, got: s.pixels.len() });
    }
    let ages: Vec<f64> = train.iter().map(|s| s.target_age).collect();
    let target_mean = stats::mean(&ages);
    let sd = stats::sample_sd(&ages);
    let target_sd = if sd > 1e-12 { sd } else { 1.0 };

    let mut rng = fold_rng(tc.seed, fold_index);
    let mut w = net.init_weights(&mut rng);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let val_targets: Vec<f64> = val.iter().map(|s| s.target_age).collect();
    let mut best: Option<(f64, Weights, usize)> = None;
    let mut trace = Vec::with_capacity(tc.epochs);

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let inputs: Vec<SliceSample> =
                batch.iter().map(|&i| augment(&train[i], tc.augment_probability, tc.rotation, &mut rng)).collect();
            let refs: Vec<&[f64]> = inputs.iter().map(|s| s.pixels.as_slice()).collect();
            let targets: Vec<f64> = inputs.iter().map(|s| (s.target_age - target_mean) / target_sd).collect();
            let (loss, grad) = net.mae_gradient(&w, &refs, &targets)?;
            net.apply_step(&mut w, &grad, tc.learning_rate);
            if !loss.is_finite() || !w.is_finite() {
                return Err(RegressorError::DivergedLoss { epoch });
            }
            loss_sum += loss * target_sd * batch.len() as f64;
        }
        let preds: Vec<f64> = val
            .iter()
            .map(|s| Ok(target_mean + target_sd * net.forward(&w, &s.pixels)?))
            .collect::<Result<_>>()?;
        let val_mae = loss_mae(&preds, &val_targets)?;
        if !val_mae.is_finite() {
            return Err(RegressorError::DivergedLoss { epoch });
        }
        trace.push(EpochStats { epoch, train_mae: loss_sum / train.len() as f64, val_mae });
        if best.as_ref().is_none_or(|b| val_mae < b.0) {
            best = Some((val_mae, w.clone(), epoch));
        }
    }
    let (best_val_mae, best_weights, epoch_of_best) = best.expect("at least one epoch");
    Ok(FoldModel {
        fold_index,
        config: cfg.clone(),
        best_weights,
        best_val_mae,
        epoch_of_best,
        target_mean,
        target_sd,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train_slices: usize,
    pub n_val_slices: usize,
    pub best_val_mae: f64,
    pub epoch_of_best: usize,
    /// MAE of predicting the training-mean age for every validation slice.
    pub constant_mae: f64,
}

/// Trains one model per fold; fold `i` validates on exactly fold `i`'s patients
/// and trains on the patients of every other fold. Folds train in parallel;
/// each uses its own random stream so results do not depend on scheduling.
pub fn train_cv(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    folds: &[Vec<String>],
    slices_by_patient: &BTreeMap<String, Vec<SliceSample>>,
) -> Result<(Vec<FoldModel>, Vec<FoldReport>)> {
    let gather = |ids: &mut dyn Iterator<Item = &String>| -> Result<Vec<SliceSample>> {
        let mut out = vec![];
        for id in ids {
            let s = slices_by_patient.get(id).ok_or_else(|| RegressorError::UnknownPatient(id.clone()))?;
            out.extend(s.iter().cloned());
        }
        Ok(out)
    };
    let results: Vec<Result<(FoldModel, FoldReport)>> = (0..folds.len())
        .into_par_iter()
        .map(|k| {
            let val = gather(&mut folds[k].iter())?;
            let train = gather(&mut folds.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, f)| f.iter()))?;
            let model = train_fold_indexed(cfg, tc, &train, &val, k)?;
            let val_targets: Vec<f64> = val.iter().map(|s| s.target_age).collect();
            let constant = vec![model.target_mean; val.len()];
            let report = FoldReport {
                fold: k,
                n_train_slices: train.len(),
                n_val_slices: val.len(),
                best_val_mae: model.best_val_mae,
                epoch_of_best: model.epoch_of_best,
                constant_mae: loss_mae(&constant, &val_targets)?,
            };
            Ok((model, report))
        })
        .collect();
    let mut models = vec![];
    let mut reports = vec![];
    for r in results {
        let (m, rep) = r?;
        models.push(m);
        reports.push(rep);
    }
    Ok((models, reports))
}

/// Ensemble prediction: per slice the mean over fold models, then the mean over slices.
pub fn predict_patient_age(models: &[FoldModel], slices: &[SliceSample]) -> Result<f64> {
    if slices.is_empty() {
        return Err(RegressorError::NoSlices);
    }
    if models.is_empty() {
        return Err(RegressorError::NoModels);
    }
    let per_model: Vec<Vec<f64>> = models.iter().map(|m| m.predict_slices(slices)).collect::<Result<_>>()?;
    let per_slice: Vec<f64> = (0..slices.len())
        .map(|i| per_model.iter().map(|p| p[i]).sum::<f64>() / models.len() as f64)
        .collect();
    Ok(stats::mean(&per_slice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressor::LayerSpec;

    fn slice(id: &str, idx: usize, pixels: Vec<f64>, age: f64) -> SliceSample {
        let size = (pixels.len() as f64).sqrt() as usize;
        SliceSample { patient_id: id.into(), slice_index: idx, target_age: age, size, pixels }
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n * n).map(|i| i as f64 / (n * n) as f64).collect()
    }

    #[test]
    fn mae_examples() {
        assert_eq!(loss_mae(&[70.0, 60.0], &[65.0, 65.0]).unwrap(), 5.0);
        assert_eq!(loss_mae(&[1.5, 2.5], &[1.5, 2.5]).unwrap(), 0.0);
        assert!(matches!(loss_mae(&[], &[]), Err(RegressorError::EmptyBatch)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p: Vec<f64> = (0..50).map(|_| rng.random_range(40.0..90.0)).collect();
        let t: Vec<f64> = (0..50).map(|_| rng.random_range(40.0..90.0)).collect();
        let mut direct = 0.0;
        for i in 0..50 {
            direct += if p[i] > t[i] { p[i] - t[i] } else { t[i] - p[i] };
        }
        assert!((loss_mae(&p, &t).unwrap() - direct / 50.0).abs() < 1e-12);
    }

    #[test]
    fn augmentation_properties() {
        let s = slice("a", 0, ramp(6), 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&s, 0.0, RotationMode::QuarterTurns, &mut rng), s);
        let r2 = rotate_quarter(&s.pixels, 6, 2);
        assert_ne!(r2, s.pixels);
        assert_eq!(rotate_quarter(&r2, 6, 2), s.pixels);
        assert_eq!(rotate_quarter(&s.pixels, 6, 4), s.pixels);
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        for _ in 0..50 {
            let a = augment(&s, 1.0, RotationMode::QuarterTurns, &mut rng);
            assert_eq!(a.pixels.len(), s.pixels.len());
            assert_eq!(sorted(&a.pixels), sorted(&s.pixels));
            let b = augment(&s, 1.0, RotationMode::Arbitrary { max_degrees: 30.0 }, &mut rng);
            let (lo, hi) = (0.0, *sorted(&s.pixels).last().unwrap());
            assert!(b.pixels.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
        assert_eq!(rotate_bilinear(&s.pixels, 6, 0.0), s.pixels);
    }

    fn intensity_task(n_patients: usize, rng: &mut ChaCha8Rng, prefix: &str) -> Vec<SliceSample> {
        let n = 8;
        (0..n_patients)
            .flat_map(|p| {
                let level: f64 = rng.random_range(0.2..0.8);
                (0..2)
                    .map(|k| {
                        let px: Vec<f64> = (0..n * n).map(|_| (level + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)).collect();
                        let age = 100.0 * stats::mean(&px);
                        slice(&format!("{prefix}{p}"), k, px, age)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn small_cfg() -> ModelConfig {
        ModelConfig { input_size: 8, ..ModelConfig::default() }
    }

    #[test]
    fn learns_mean_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = intensity_task(40, &mut rng, "t");
        let val = intensity_task(10, &mut rng, "v");
        let tc = TrainConfig { epochs: 120, batch_size: 8, seed: 5, ..Default::default() };
        let model = train_fold(&small_cfg(), &tc, &train, &val).unwrap();
        let ages: Vec<f64> = val.iter().map(|s| s.target_age).collect();
        assert!(model.best_val_mae < 0.2 * stats::sample_sd(&ages), "{} vs {}", model.best_val_mae, stats::sample_sd(&ages));
        let min = model.trace.iter().map(|e| e.val_mae).fold(f64::INFINITY, f64::min);
        assert_eq!(model.best_val_mae, min);
        assert_eq!(model.trace[model.epoch_of_best - 1].val_mae, min);
        // same inputs, same trajectory
        let tc2 = TrainConfig { epochs: 3, ..tc };
        assert_eq!(train_fold(&small_cfg(), &tc2, &train, &val).unwrap(), train_fold(&small_cfg(), &tc2, &train, &val).unwrap());
    }

    #[test]
    fn single_epoch_and_leakage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = intensity_task(4, &mut rng, "t");
        let val = intensity_task(2, &mut rng, "v");
        let tc = TrainConfig { epochs: 1, ..Default::default() };
        assert_eq!(train_fold(&small_cfg(), &tc, &train, &val).unwrap().epoch_of_best, 1);
        let mut leaky = val.clone();
        leaky.push(train[0].clone());
        assert!(matches!(train_fold(&small_cfg(), &tc, &train, &leaky), Err(RegressorError::PatientLeakage(id)) if id == "t0"));
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train = intensity_task(4, &mut rng, "t");
        let val = intensity_task(2, &mut rng, "v");
        let tc = TrainConfig { epochs: 2, learning_rate: 1e300, ..Default::default() };
        assert!(matches!(train_fold(&small_cfg(), &tc, &train, &val), Err(RegressorError::DivergedLoss { epoch: 1 })));
    }

    #[test]
    fn cross_validation_partitions_patients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let all = intensity_task(25, &mut rng, "p");
        let mut by: BTreeMap<String, Vec<SliceSample>> = BTreeMap::new();
        for s in all {
            by.entry(s.patient_id.clone()).or_default().push(s);
        }
        let ids: Vec<String> = by.keys().cloned().collect();
        let folds: Vec<Vec<String>> = (0..5).map(|k| ids.iter().skip(k).step_by(5).cloned().collect()).collect();
        let tc = TrainConfig { epochs: 40, batch_size: 8, seed: 1, ..Default::default() };
        let (models, reports) = train_cv(&small_cfg(), &tc, &folds, &by).unwrap();
        assert_eq!(models.len(), 5);
        for (k, r) in reports.iter().enumerate() {
            assert_eq!(r.fold, k);
            assert_eq!(r.n_val_slices, 2 * folds[k].len());
            assert_eq!(r.n_train_slices + r.n_val_slices, 50);
            assert!(r.best_val_mae < r.constant_mae, "fold {k}: {} vs {}", r.best_val_mae, r.constant_mae);
        }
        let mut missing = folds.clone();
        missing[0].push("ghost".into());
        assert!(matches!(train_cv(&small_cfg(), &tc, &missing, &by), Err(RegressorError::UnknownPatient(_))));
    }

    fn constant_model(bias: f64) -> FoldModel {
        let cfg = ModelConfig { input_size: 2, layers: vec![LayerSpec::GlobalAveragePool, LayerSpec::Dense { out_dim: 1 }], frozen: vec![] };
        let net = Network::new(&cfg).unwrap();
        let mut w = net.zero_weights();
        w.values[0] = 1.0;
        w.values[1] = bias;
        FoldModel {
            fold_index: 0,
            config: cfg,
            best_weights: w,
            best_val_mae: 0.0,
            epoch_of_best: 1,
            target_mean: 0.0,
            target_sd: 1.0,
            trace: vec![],
        }
    }

    #[test]
    fn ensemble_means() {
        let m = constant_model(0.0);
        let slices: Vec<SliceSample> = [68.0, 70.0, 72.0].iter().map(|&a| slice("a", 0, vec![a; 4], 0.0)).collect();
        assert_eq!(predict_patient_age(std::slice::from_ref(&m), &slices).unwrap(), 70.0);
        assert_eq!(predict_patient_age(&[m.clone(), m.clone(), m.clone()], &slices).unwrap(), 70.0);
        assert!(matches!(predict_patient_age(&[m.clone()], &[]), Err(RegressorError::NoSlices)));
        assert!(matches!(predict_patient_age(&[], &slices), Err(RegressorError::NoModels)));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let models: Vec<FoldModel> = (0..4).map(|_| constant_model(rng.random_range(-3.0..3.0))).collect();
        let sl: Vec<SliceSample> = (0..5).map(|_| slice("b", 0, vec![rng.random_range(50.0..80.0); 4], 0.0)).collect();
        let mut total = 0.0;
        for s in &sl {
            for m in &models {
                total += s.pixels[0] + m.best_weights.values[1];
            }
        }
        let direct = total / 20.0;
        assert!((predict_patient_age(&models, &sl).unwrap() - direct).abs() < 1e-12);
        let mut rev = models.clone();
        rev.reverse();
        let mut sl_rev = sl.clone();
        sl_rev.reverse();
        assert!((predict_patient_age(&rev, &sl_rev).unwrap() - direct).abs() < 1e-12);
    }
}
