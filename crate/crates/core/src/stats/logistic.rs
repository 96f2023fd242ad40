use super::{Result, StatsError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::fmt;

/// Covariates that can enter a risk model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Pag,
    Age,
    Psa,
    VolumeMl,
    Psad,
    PiradsGe3,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::Pag => "pag",
            Covariate::Age => "age",
            Covariate::Psa => "psa",
            Covariate::VolumeMl => "volume_ml",
            Covariate::Psad => "psad",
            Covariate::PiradsGe3 => "pirads_ge3",
        }
    }
}

/// Row access used when assembling a design matrix.
pub trait CovariateSource {
    fn subject_id(&self) -> &str;
    fn covariate(&self, c: Covariate) -> Option<f64>;
    /// csPC = 1.
    fn is_case(&self) -> bool;
}

/// Risk models. `I`–`VI` are the PAG models; the rest are comparators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    I,
    II,
    III,
    IV,
    V,
    VI,
    /// Model II without PAG.
    Base,
    /// PI-RADS ≥ 3 adjusted by age, volume and PSA.
    PiradsAdjusted,
    PiradsUnadjusted,
}

impl ModelId {
    pub const PAG_MODELS: [ModelId; 6] =
        [ModelId::I, ModelId::II, ModelId::III, ModelId::IV, ModelId::V, ModelId::VI];

    pub fn covariates(self) -> &'static [Covariate] {
        use Covariate::*;
        match self {
            ModelId::I => &[Pag],
            ModelId::II => &[Pag, Age, VolumeMl, Psa],
            ModelId::III => &[Pag, Age, VolumeMl, Psa, PiradsGe3],
            ModelId::IV => &[Pag, Age, Psad],
            ModelId::V => &[Pag, Age, Psad, PiradsGe3],
            ModelId::VI => &[Pag, Age, PiradsGe3],
            ModelId::Base => &[Age, VolumeMl, Psa],
            ModelId::PiradsAdjusted => &[PiradsGe3, Age, VolumeMl, Psa],
            ModelId::PiradsUnadjusted => &[PiradsGe3],
        }
    }

    /// Adjustment column text for the odds-ratio table.
    pub fn adjustment(self) -> &'static str {
        match self {
            ModelId::I => "-",
            ModelId::II => "Age, volume and PSA",
            ModelId::III => "Age, volume, PSA and PI-RADS",
            ModelId::IV => "Age and PSAd",
            ModelId::V => "Age, PSAd and PI-RADS",
            ModelId::VI => "Age and PI-RADS",
            ModelId::Base => "Age, volume and PSA (no PAG)",
            ModelId::PiradsAdjusted => "PI-RADS >= 3, age, volume and PSA",
            ModelId::PiradsUnadjusted => "PI-RADS >= 3",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelId::I => "I",
            ModelId::II => "II",
            ModelId::III => "III",
            ModelId::IV => "IV",
            ModelId::V => "V",
            ModelId::VI => "VI",
            ModelId::Base => "base",
            ModelId::PiradsAdjusted => "pirads_adjusted",
            ModelId::PiradsUnadjusted => "pirads_unadjusted",
        };
        f.write_str(s)
    }
}

/// Intercept-first design matrix with a binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub subject_ids: Vec<String>,
}

impl DesignMatrix {
    /// Builds a design from raw columns (intercept is prepended).
    pub fn from_columns(names: &[&str], columns: &[Vec<f64>], outcome: &[bool]) -> Result<Self> {
        let n = outcome.len();
        if names.len() != columns.len() {
            return Err(StatsError::LengthMismatch(names.len(), columns.len()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(StatsError::LengthMismatch(c.len(), n));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| **n == "intercept" || !seen.insert(**n)) {
            return Err(StatsError::InvalidArgument(format!("duplicate column `{dup}`")));
        }
        let p = columns.len() + 1;
        let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidArgument("non-finite design cell".into()));
        }
        let mut all = vec!["intercept".to_string()];
        all.extend(names.iter().map(|s| s.to_string()));
        Ok(Self {
            names: all,
            x,
            y: DVector::from_iterator(n, outcome.iter().map(|&b| if b { 1.0 } else { 0.0 })),
            subject_ids: (0..n).map(|i| i.to_string()).collect(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub fn build_design_columns<R: CovariateSource>(rows: &[R], covariates: &[Covariate]) -> Result<DesignMatrix> {
    if rows.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut cols = vec![Vec::with_capacity(rows.len()); covariates.len()];
    for r in rows {
        for (col, &c) in cols.iter_mut().zip(covariates) {
            let v = r.covariate(c).ok_or_else(|| StatsError::MissingCovariate {
                patient: r.subject_id().to_string(),
                covariate: c.name().to_string(),
            })?;
            col.push(v);
        }
    }
    let names: Vec<&str> = covariates.iter().map(|c| c.name()).collect();
    let outcome: Vec<bool> = rows.iter().map(|r| r.is_case()).collect();
    let mut d = DesignMatrix::from_columns(&names, &cols, &outcome)?;
    d.subject_ids = rows.iter().map(|r| r.subject_id().to_string()).collect();
    Ok(d)
}

pub fn build_design<R: CovariateSource>(rows: &[R], model: ModelId) -> Result<DesignMatrix> {
    build_design_columns(rows, model.covariates())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    pub score_tol: f64,
    pub step_tol: f64,
    /// Bound on |beta_j · sd(x_j)| beyond which a coefficient is treated as diverging.
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 100, score_tol: 1e-8, step_tol: 1e-10, separation_bound: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    /// Inverse observed information at `beta`.
    pub cov: DMatrix<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub max_abs_score: f64,
}

impl LogisticFit {
    pub fn se(&self, j: usize) -> f64 {
        self.cov[(j, j)].max(0.0).sqrt()
    }

    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.beta[j], self.se(j)))
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn loglik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y.iter()).map(|(&e, &yi)| yi * e - softplus(e)).sum()
}

struct Curvature {
    score: DVector<f64>,
    info: DMatrix<f64>,
}

fn curvature(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> Curvature {
    let eta = x * beta;
    let p = eta.map(sigmoid);
    let score = x.transpose() * (y - &p);
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= p[i] * (1.0 - p[i]);
    }
    let info = x.transpose() * xw;
    Curvature { score, info }
}

fn column_sds(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .enumerate()
        .map(|(j, c)| {
            if j == 0 {
                return 0.0;
            }
            let m = c.sum() / n;
            (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// The index and scaled size of the largest standardized non-intercept coefficient.
fn largest_scaled(beta: &DVector<f64>, sds: &[f64]) -> (usize, f64) {
    (1..beta.len())
        .map(|j| (j, (beta[j] * sds[j]).abs()))
        .fold((0, 0.0), |acc, b| if b.1 > acc.1 { b } else { acc })
}

/// Maximum-likelihood logistic regression by Newton–Raphson (IRLS) with
/// step-halving whenever the log-likelihood would decrease.
pub fn fit_logistic(design: &DesignMatrix, opts: &FitOptions) -> Result<LogisticFit> {
    let (x, y) = (&design.x, &design.y);
    let (n, p) = (x.nrows(), x.ncols());
    if n <= p {
        return Err(StatsError::TooFewSamples { needed: p + 1, got: n });
    }
    let cases = y.iter().filter(|&&v| v == 1.0).count();
    if cases == 0 || cases == n {
        return Err(StatsError::OneClassOutcome);
    }
    let sds = column_sds(x);
    let separation = |beta: &DVector<f64>| {
        let (j, _) = largest_scaled(beta, &sds);
        StatsError::QuasiSeparation { covariate: design.names[j].clone() }
    };

    let mut beta = DVector::zeros(p);
    let mut ll = loglik(x, y, &beta);
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < opts.max_iter {
        let c = curvature(x, y, &beta);
        if c.score.amax() < opts.score_tol {
            converged = true;
            break;
        }
        n_iter += 1;
        let Some(chol) = c.info.clone().cholesky() else {
            if ll > -1e-6 || largest_scaled(&beta, &sds).1 > opts.separation_bound / 2.0 {
                return Err(separation(&beta));
            }
            return Err(StatsError::Singular);
        };
        let delta = chol.solve(&c.score);
        let mut t = 1.0;
        let mut cand = &beta + &delta;
        let mut ll_cand = loglik(x, y, &cand);
        let mut halvings = 0;
        while !(ll_cand >= ll - 1e-12 * ll.abs()) && halvings < 40 {
            t *= 0.5;
            halvings += 1;
            cand = &beta + &delta * t;
            ll_cand = loglik(x, y, &cand);
        }
        let step = (&delta * t).amax();
        beta = cand;
        ll = ll_cand;
        if step < opts.step_tol {
            converged = true;
            break;
        }
        if largest_scaled(&beta, &sds).1 > opts.separation_bound {
            let c = curvature(x, y, &beta);
            if c.score.amax() >= opts.score_tol {
                return Err(separation(&beta));
            }
        }
    }

    if largest_scaled(&beta, &sds).1 > opts.separation_bound {
        return Err(separation(&beta));
    }
    // A subgroup fitted to within 1e-8 whose coefficient has an exploding
    // standard error is a separating direction the optimizer stalled on.
    let fitted = (x * &beta).map(sigmoid);
    let saturated = fitted.iter().zip(y.iter()).any(|(&p, &yi)| (yi - p).abs() < 1e-8);
    let c = curvature(x, y, &beta);
    let Some(chol) = c.info.clone().cholesky() else {
        return Err(if saturated { separation(&beta) } else { StatsError::Singular });
    };
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    if saturated {
        let worst = (1..p)
            .map(|j| (j, cov[(j, j)].sqrt() * sds[j]))
            .fold((0, 0.0), |acc, b| if b.1 > acc.1 { b } else { acc });
        if worst.1 > opts.separation_bound {
            return Err(StatsError::QuasiSeparation { covariate: design.names[worst.0].clone() });
        }
    }
    Ok(LogisticFit {
        names: design.names.clone(),
        beta,
        cov,
        loglik: ll,
        converged,
        n_iter,
        max_abs_score: c.score.amax(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub covariate: String,
    pub beta: f64,
    pub se: f64,
    pub or: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Wald odds ratio per one-unit increase of `covariate`.
pub fn odds_ratio(fit: &LogisticFit, covariate: &str, level: f64) -> Result<OddsRatio> {
    if !fit.converged {
        return Err(StatsError::NotConverged);
    }
    if !(0.0 < level && level < 1.0) {
        return Err(StatsError::InvalidArgument(format!("confidence level {level}")));
    }
    let (beta, se) = fit
        .coefficient(covariate)
        .ok_or_else(|| StatsError::UnknownCovariate(covariate.to_string()))?;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let p_value = if se > 0.0 { erfc((beta / se).abs() / std::f64::consts::SQRT_2) } else { f64::NAN };
    Ok(OddsRatio {
        covariate: covariate.to_string(),
        beta,
        se,
        or: beta.exp(),
        ci_low: (beta - z * se).exp(),
        ci_high: (beta + z * se).exp(),
        p_value: p_value.clamp(0.0, 1.0),
    })
}

/// Fitted probability per design row.
pub fn predicted_risk(fit: &LogisticFit, design: &DesignMatrix) -> Result<Vec<f64>> {
    if fit.names != design.names {
        return Err(StatsError::ColumnMismatch { expected: fit.names.clone(), got: design.names.clone() });
    }
    Ok((&design.x * &fit.beta).iter().map(|&e| sigmoid(e)).collect())
}
