use super::descriptive::percentile;
use super::roc::{auc_trapezoid, weighted_auc_sorted};
use super::{check_two_classes, Result, StatsError, TestResult};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResampleMode {
    WithReplacement,
    /// Draw `fraction` of the patients without replacement.
    Subsample { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    pub n_replicates: usize,
    pub seed: u64,
    pub stratified: bool,
    pub mode: ResampleMode,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { n_replicates: 1000, seed: 0, stratified: true, mode: ResampleMode::WithReplacement }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapAuc {
    pub point_auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_replicates: usize,
    pub seed: u64,
}

/// Random stream for one replicate; identical whether replicates run serially or in parallel.
fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

struct Resampler {
    pos: Vec<usize>,
    neg: Vec<usize>,
    n: usize,
    opts: BootstrapOptions,
}

impl Resampler {
    fn new(labels: &[bool], opts: BootstrapOptions) -> Result<Self> {
        check_two_classes(labels)?;
        if opts.n_replicates == 0 {
            return Err(StatsError::InvalidArgument("n_replicates must be positive".into()));
        }
        if let ResampleMode::Subsample { fraction } = opts.mode {
            if !(0.0 < fraction && fraction <= 1.0) {
                return Err(StatsError::InvalidArgument(format!("subsample fraction {fraction}")));
            }
        }
        let pos = (0..labels.len()).filter(|&i| labels[i]).collect();
        let neg = (0..labels.len()).filter(|&i| !labels[i]).collect();
        Ok(Self { pos, neg, n: labels.len(), opts })
    }

    fn draw_into(&self, pool: &[usize], k: usize, rng: &mut ChaCha8Rng, w: &mut [u32]) {
        match self.opts.mode {
            ResampleMode::WithReplacement => {
                for _ in 0..k {
                    w[pool[rng.random_range(0..pool.len())]] += 1;
                }
            }
            ResampleMode::Subsample { .. } => {
                for i in sample(rng, pool.len(), k.min(pool.len())) {
                    w[pool[i]] += 1;
                }
            }
        }
    }

    fn size(&self, n: usize) -> usize {
        match self.opts.mode {
            ResampleMode::WithReplacement => n,
            ResampleMode::Subsample { fraction } => ((n as f64 * fraction).floor() as usize).max(1),
        }
    }

    /// Per-patient multiplicities for one replicate, with both classes present.
    fn weights(&self, replicate: usize, labels: &[bool]) -> Vec<u32> {
        let mut rng = replicate_rng(self.opts.seed, replicate);
        let mut w = vec![0u32; self.n];
        if self.opts.stratified {
            self.draw_into(&self.pos, self.size(self.pos.len()), &mut rng, &mut w);
            self.draw_into(&self.neg, self.size(self.neg.len()), &mut rng, &mut w);
            return w;
        }
        let all: Vec<usize> = (0..self.n).collect();
        loop {
            w.iter_mut().for_each(|x| *x = 0);
            self.draw_into(&all, self.size(self.n), &mut rng, &mut w);
            let has_pos = w.iter().zip(labels).any(|(&c, &l)| c > 0 && l);
            let has_neg = w.iter().zip(labels).any(|(&c, &l)| c > 0 && !l);
            if has_pos && has_neg {
                return w;
            }
        }
    }
}

fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    idx
}

fn weighted_auc(order: &[usize], scores: &[f64], labels: &[bool], w: &[u32]) -> f64 {
    let p: u64 = w.iter().zip(labels).filter(|(_, &l)| l).map(|(&c, _)| u64::from(c)).sum();
    let n: u64 = w.iter().zip(labels).filter(|(_, &l)| !l).map(|(&c, _)| u64::from(c)).sum();
    weighted_auc_sorted(order, scores, labels, Some(w)) / (p as f64 * n as f64)
}

/// Percentile bootstrap confidence interval (2.5 / 97.5) for the AUC.
pub fn bootstrap_auc(scores: &[f64], labels: &[bool], opts: BootstrapOptions) -> Result<BootstrapAuc> {
    let point_auc = auc_trapezoid(scores, labels)?;
    let resampler = Resampler::new(labels, opts)?;
    let order = descending(scores);
    let reps: Vec<f64> = (0..opts.n_replicates)
        .into_par_iter()
        .map(|r| weighted_auc(&order, scores, labels, &resampler.weights(r, labels)))
        .collect();
    Ok(BootstrapAuc {
        point_auc,
        ci_low: percentile(&reps, 2.5),
        ci_high: percentile(&reps, 97.5),
        n_replicates: opts.n_replicates,
        seed: opts.seed,
    })
}

/// Paired bootstrap test of AUC(a) = AUC(b): both score vectors are evaluated
/// on the same resampled patients. The two-sided p value doubles the fraction
/// of replicate differences on the far side of zero, clamped to [2/(B+1), 1].
pub fn compare_auc(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
    n_replicates: usize,
    seed: u64,
) -> Result<TestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(StatsError::LengthMismatch(scores_a.len(), scores_b.len()));
    }
    let observed = auc_trapezoid(scores_a, labels)? - auc_trapezoid(scores_b, labels)?;
    let opts = BootstrapOptions { n_replicates, seed, ..Default::default() };
    let resampler = Resampler::new(labels, opts)?;
    let (oa, ob) = (descending(scores_a), descending(scores_b));
    let diffs: Vec<f64> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let w = resampler.weights(r, labels);
            weighted_auc(&oa, scores_a, labels, &w) - weighted_auc(&ob, scores_b, labels, &w)
        })
        .collect();
    let p = if observed == 0.0 || diffs.iter().all(|&d| d == 0.0) {
        1.0
    } else {
        let crossing = if observed > 0.0 {
            diffs.iter().filter(|&&d| d <= 0.0).count()
        } else {
            diffs.iter().filter(|&&d| d >= 0.0).count()
        };
        let floor = 2.0 / (n_replicates as f64 + 1.0);
        (2.0 * crossing as f64 / n_replicates as f64).clamp(floor, 1.0)
    };
    Ok(TestResult::new("paired_bootstrap_auc", observed, None, p))
}
