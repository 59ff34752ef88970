//! Small statistical helpers shared by the experiment modules.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Kolmogorov-Smirnov distance between a sample and a CDF.
///
/// Sorts a copy of the sample; `cdf` must be nondecreasing on its support.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    wilson_interval_z(successes, trials, 1.959_963_984_540_054)
}

/// Wilson score interval at an arbitrary normal quantile `z`.
pub fn wilson_interval_z(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "Wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * ((p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt());
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Standard error of a binomial frequency estimate.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p.max(0.0).min(1.0) * (1.0 - p.max(0.0).min(1.0)) / trials as f64).sqrt()
}

/// Two-sided normal quantile equivalent to `base_z` after a Bonferroni
/// correction for `m` simultaneous tests.
pub fn bonferroni_z(base_z: f64, m: usize) -> f64 {
    if m <= 1 {
        return base_z;
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let tail = normal.cdf(-base_z); // one-sided tail mass of the base band
    normal.inverse_cdf(1.0 - tail / m as f64)
}

/// Ordinary least squares of `y` on `x`. Returns `(slope, intercept)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Chi-square homogeneity test for `k` binomial counts with a common rate.
///
/// Returns the p-value of the hypothesis that all groups share one success
/// probability. `counts[i]` successes out of `trials[i]`.
pub fn chi2_homogeneity_pvalue(counts: &[u64], trials: &[u64]) -> f64 {
    assert_eq!(counts.len(), trials.len());
    let total_s: u64 = counts.iter().sum();
    let total_n: u64 = trials.iter().sum();
    let pooled = total_s as f64 / total_n as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return 1.0;
    }
    let mut chi2 = 0.0;
    for (&s, &n) in counts.iter().zip(trials) {
        let e1 = n as f64 * pooled;
        let e0 = n as f64 * (1.0 - pooled);
        let o1 = s as f64;
        let o0 = (n - s) as f64;
        chi2 += (o1 - e1) * (o1 - e1) / e1 + (o0 - e0) * (o0 - e0) / e0;
    }
    let dof = (counts.len() - 1) as f64;
    let dist = ChiSquared::new(dof).unwrap();
    1.0 - dist.cdf(chi2)
}

/// One-sided p-value for the regression slope of `y` on `x` being negative.
///
/// Small p supports a decreasing trend; p near 1 supports an increasing one.
pub fn decreasing_trend_pvalue(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 3, "trend test needs at least 3 points");
    let (slope, intercept) = least_squares(x, y);
    let mx = x.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|&xi| (xi - mx) * (xi - mx)).sum();
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - slope * xi - intercept;
            r * r
        })
        .sum();
    let se = (rss / (n as f64 - 2.0) / sxx).sqrt();
    if se == 0.0 {
        return if slope < 0.0 { 0.0 } else { 1.0 };
    }
    let t = slope / se;
    let dist = StudentsT::new(0.0, 1.0, n as f64 - 2.0).unwrap();
    dist.cdf(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_uniform_grid_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12, "d = {d}");
    }

    #[test]
    fn ks_detects_wrong_law() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64).powi(2)).collect();
        let d = ks_distance(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d > 0.2, "d = {d}");
    }

    #[test]
    fn wilson_interval_brackets_the_rate() {
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.07);
        let (lo1, hi1) = wilson_interval(1000, 1000);
        assert!(lo1 > 0.99 && (hi1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 3.0 * xi - 2.0).collect();
        let (a, b) = least_squares(&x, &y);
        assert!((a - 3.0).abs() < 1e-12 && (b + 2.0).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_widens_the_band() {
        let z = bonferroni_z(3.0, 6);
        assert!(z > 3.0 && z < 4.5, "z = {z}");
    }

    #[test]
    fn homogeneous_counts_get_large_pvalue() {
        let p = chi2_homogeneity_pvalue(&[100, 103, 98, 101], &[1000, 1000, 1000, 1000]);
        assert!(p > 0.1, "p = {p}");
    }

    #[test]
    fn heterogeneous_counts_get_small_pvalue() {
        let p = chi2_homogeneity_pvalue(&[100, 200], &[1000, 1000]);
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn trend_test_direction() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let down: Vec<f64> = x.iter().map(|&xi| 1.0 - 0.01 * xi + 0.001 * (xi * 7.3).sin()).collect();
        let up: Vec<f64> = x.iter().map(|&xi| 1.0 + 0.01 * xi + 0.001 * (xi * 7.3).sin()).collect();
        assert!(decreasing_trend_pvalue(&x, &down) < 0.01);
        assert!(decreasing_trend_pvalue(&x, &up) > 0.99);
    }
}
