//! Descriptive statistics and goodness-of-fit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divisor n).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor n - 1).
pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    (variance(xs) * n / (n - 1.0)).sqrt()
}

/// Moment skewness `m3 / m2^{3/2}`; `None` for a constant series.
pub fn skewness(xs: &[f64]) -> Option<f64> {
    let m = mean(xs);
    let m2 = variance(xs);
    if m2 <= 0.0 {
        return None;
    }
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / xs.len() as f64;
    Some(m3 / m2.powf(1.5))
}

/// Excess kurtosis `m4 / m2^2 - 3`; `None` for a constant series.
pub fn excess_kurtosis(xs: &[f64]) -> Option<f64> {
    let m = mean(xs);
    let m2 = variance(xs);
    if m2 <= 0.0 {
        return None;
    }
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / xs.len() as f64;
    Some(m4 / (m2 * m2) - 3.0)
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test of `samples` against the continuous
/// CDF `cdf`, with the Stephens small-sample correction for the p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        d = d.max(lo).max(hi);
    }
    let sn = n.sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    KsResult { statistic: d, p_value: p }
}

/// KS test of `samples` against Exp(`rate`).
pub fn ks_exponential(samples: &[f64], rate: f64) -> KsResult {
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square goodness-of-fit of `observed` counts against cell
/// probabilities `probs`. Cells with zero probability must have zero counts
/// and are dropped from the degrees of freedom.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> ChiSquareResult {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                return ChiSquareResult { statistic: f64::INFINITY, dof: 0, p_value: 0.0 };
            }
            continue;
        }
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    ChiSquareResult { statistic: stat, dof, p_value: 1.0 - dist.cdf(stat) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((mean(&xs) - 2.5).abs() < 1e-15);
        assert!((variance(&xs) - 1.25).abs() < 1e-15);
        assert!(skewness(&xs).unwrap().abs() < 1e-15);
        // m4 = 2.5625 / 1.25^2 = 1.64
        assert!((excess_kurtosis(&xs).unwrap() - (1.64 - 3.0)).abs() < 1e-12);
        assert!(skewness(&[2.0, 2.0]).is_none());
    }

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (b, a) = ols(&x, &y);
        assert!((b - 2.0).abs() < 1e-12 && (a + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_reference_points() {
        // Tabulated: P(K > 1.36) ~ 0.049, P(K > 1.63) ~ 0.010.
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn ks_rejects_wrong_rate() {
        let xs: Vec<f64> = (1..2000).map(|i| -((i as f64) / 2000.0).ln()).collect();
        assert!(ks_exponential(&xs, 1.0).p_value > 0.5);
        assert!(ks_exponential(&xs, 2.0).p_value < 1e-6);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let r = chi_square(&[100, 100, 100], &[1.0 / 3.0; 3]);
        assert_eq!(r.dof, 2);
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }
}
