use super::descriptive::{mean, sample_var};
use super::{Result, StatsError, TestResult};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

/// Two-sided tail probability P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

fn welch_parts(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return (t, na + nb - 2.0);
    }
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    (diff / se2.sqrt(), df)
}

/// Welch's unequal-variance t test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let got = a.len().min(b.len());
    if got < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got });
    }
    let (t, df) = welch_parts(a, b);
    let p = if t == 0.0 { 1.0 } else { student_t_sf(t, df) };
    Ok(TestResult::new("welch_t", t, Some(df), p))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMode {
    Exact,
    NormalApprox,
    /// Exact when the pooled size is at most 12.
    #[default]
    Auto,
}

/// Midranks of `x` (1-based), ties sharing the average rank.
fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Calls `f` with every size-`k` subset of `0..n` (as a sorted index slice).
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn tie_eps(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Mann-Whitney U test; the reported statistic is U for sample `a`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], mode: MwuMode) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let mu = (na * nb) as f64 / 2.0;
    let exact = match mode {
        MwuMode::Exact => true,
        MwuMode::NormalApprox => false,
        MwuMode::Auto => n <= 12,
    };
    if exact {
        let observed = (u_a - mu).abs();
        let offset = (na * (na + 1)) as f64 / 2.0;
        let (mut hits, mut total) = (0u64, 0u64);
        for_each_subset(n, na, |sub| {
            let u = sub.iter().map(|&i| ranks[i]).sum::<f64>() - offset;
            total += 1;
            if (u - mu).abs() >= observed - tie_eps(observed) {
                hits += 1;
            }
        });
        return Ok(TestResult::new("mann_whitney_exact", u_a, None, hits as f64 / total as f64));
    }
    // tie-corrected variance with continuity correction
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
        normal_two_sided(z)
    };
    Ok(TestResult::new("mann_whitney_normal", u_a, None, p))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationStatistic {
    #[default]
    MeanDiff,
    TStat,
}

/// Largest enumeration size before switching to Monte-Carlo draws.
const EXACT_PERMUTATION_LIMIT: f64 = 20_000.0;

fn perm_stat(stat: PermutationStatistic, a: &[f64], b: &[f64]) -> f64 {
    match stat {
        PermutationStatistic::MeanDiff => mean(a) - mean(b),
        PermutationStatistic::TStat => {
            if a.len() < 2 || b.len() < 2 {
                mean(a) - mean(b)
            } else {
                welch_parts(a, b).0
            }
        }
    }
}

/// Two-sided permutation test of group exchangeability.
///
/// Enumerates every split when there are at most 20 000 of them, otherwise
/// draws `n_perm` random splits; the observed split is counted in both the
/// numerator and the denominator.
pub fn permutation_test(
    a: &[f64],
    b: &[f64],
    statistic: PermutationStatistic,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    permutation_test_impl(a, b, statistic, n_perm, seed, false)
}

fn permutation_test_impl(
    a: &[f64],
    b: &[f64],
    statistic: PermutationStatistic,
    n_perm: usize,
    seed: u64,
    force_monte_carlo: bool,
) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let (na, n) = (a.len(), a.len() + b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let observed = perm_stat(statistic, a, b);
    let threshold = observed.abs() - if observed.is_finite() { tie_eps(observed) } else { 0.0 };
    let mut ga = Vec::with_capacity(na);
    let mut gb = Vec::with_capacity(n - na);

    if !force_monte_carlo && binomial(n, na) <= EXACT_PERMUTATION_LIMIT {
        let (mut hits, mut total) = (0u64, 0u64);
        for_each_subset(n, na, |sub| {
            ga.clear();
            gb.clear();
            let mut k = 0;
            for (i, &v) in pooled.iter().enumerate() {
                if k < sub.len() && sub[k] == i {
                    ga.push(v);
                    k += 1;
                } else {
                    gb.push(v);
                }
            }
            total += 1;
            if perm_stat(statistic, &ga, &gb).abs() >= threshold {
                hits += 1;
            }
        });
        return Ok(TestResult::new("permutation_exact", observed, None, hits as f64 / total as f64));
    }

    if n_perm == 0 {
        return Err(StatsError::InvalidArgument("n_perm must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = pooled.clone();
    let mut hits = 1u64;
    for _ in 0..n_perm {
        shuffled.shuffle(&mut rng);
        if perm_stat(statistic, &shuffled[..na], &shuffled[na..]).abs() >= threshold {
            hits += 1;
        }
    }
    Ok(TestResult::new(
        "permutation_monte_carlo",
        observed,
        None,
        hits as f64 / (n_perm + 1) as f64,
    ))
}

/// Pearson chi-square test of independence on an r × c count table.
/// Yates' continuity correction is applied only to 2 × 2 tables when `yates` is set.
/// Rows or columns with zero total are dropped.
pub fn chi_square_test(table: &[Vec<f64>], yates: bool) -> Result<TestResult> {
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    let ncol = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncol) {
        return Err(StatsError::InvalidArgument("ragged contingency table".into()));
    }
    let keep: Vec<usize> = (0..ncol).filter(|&j| rows.iter().map(|r| r[j]).sum::<f64>() > 0.0).collect();
    if rows.len() < 2 || keep.len() < 2 {
        return Ok(TestResult::new("chi_square", 0.0, Some(0.0), 1.0));
    }
    let row_tot: Vec<f64> = rows.iter().map(|r| keep.iter().map(|&j| r[j]).sum()).collect();
    let col_tot: Vec<f64> = keep.iter().map(|&j| rows.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    let correct = yates && rows.len() == 2 && keep.len() == 2;
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (jj, &j) in keep.iter().enumerate() {
            let e = row_tot[i] * col_tot[jj] / total;
            let mut d = (r[j] - e).abs();
            if correct {
                d = (d - 0.5).max(0.0);
            }
            stat += d * d / e;
        }
    }
    let df = ((rows.len() - 1) * (keep.len() - 1)) as f64;
    let p = if stat == 0.0 { 1.0 } else { gamma_ur(df / 2.0, stat / 2.0) };
    let method = if correct { "chi_square_yates" } else { "chi_square" };
    Ok(TestResult::new(method, stat, Some(df), p))
}
