//! Two-sample tests: Mann-Whitney U and Cliff's delta.

use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value from the normal approximation.
    pub p_value: f64,
}

fn non_empty(x: &[f64], y: &[f64]) -> Result<(), AnalyticsError> {
    if x.is_empty() || y.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(AnalyticsError::NanSample);
    }
    Ok(())
}

/// Mann-Whitney U with mid-ranks for ties, tie-corrected variance and a
/// 0.5 continuity correction. A zero variance (all values equal) gives p = 1.
pub fn mww_test(x: &[f64], y: &[f64]) -> Result<MannWhitney, AnalyticsError> {
    non_empty(x, y)?;
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut pooled: Vec<(f64, bool)> = x.iter().map(|v| (*v, true)).chain(y.iter().map(|v| (*v, false))).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_x += mid * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let u = rank_sum_x - m * (m + 1.0) / 2.0;
    let total = m + n;
    let var = m * n / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 || !var.is_finite() {
        return Ok(MannWhitney { u, p_value: 1.0 });
    }
    let z = ((u - m * n / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    Ok(MannWhitney { u, p_value })
}

/// `(#{x > y} - #{x < y}) / (m n)`.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    non_empty(x, y)?;
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut score: i64 = 0;
    for v in x {
        let below = ys.partition_point(|w| w < v) as i64;
        let above = (ys.len() - ys.partition_point(|w| w <= v)) as i64;
        score += below - above;
    }
    Ok(score as f64 / (x.len() * y.len()) as f64)
}

/// Conventional magnitude label for |delta|.
pub fn cliffs_magnitude(delta: f64) -> &'static str {
    match delta.abs() {
        d if d < 0.147 => "negligible",
        d if d < 0.33 => "small",
        d if d < 0.474 => "medium",
        _ => "large",
    }
}
