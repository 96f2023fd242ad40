/// Arithmetic mean; `NaN` for empty input.
pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with the n − 1 denominator. A single value has SD 0.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return if x.is_empty() { f64::NAN } else { 0.0 };
    }
    sample_var(x).sqrt()
}

pub(crate) fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Linear-interpolated percentile (`p` in percent): order statistic index
/// `h = (n - 1) p / 100`. Panics on empty input.
pub fn percentile(data: &[f64], p: f64) -> f64 {
    assert!(!data.is_empty(), "percentile of empty data");
    let mut buf = data.to_vec();
    let h = (buf.len() - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let k = h.floor() as usize;
    let frac = h - k as f64;
    let (_, lower, upper) = buf.select_nth_unstable_by(k, f64::total_cmp);
    let lower = *lower;
    if frac == 0.0 || upper.is_empty() {
        return lower;
    }
    let next = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lower + frac * (next - lower)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd_conventions() {
        assert_eq!(sample_sd(&[4.0]), 0.0);
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn percentile_interpolates() {
        let d = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&d, 0.0), 1.0);
        assert_eq!(percentile(&d, 100.0), 4.0);
        assert_eq!(percentile(&d, 50.0), 2.5);
    }
}
