use super::{PriceError, Result};
use crate::stats::{excess_kurtosis, mean, ols, skewness, std_dev};
use serde::{Deserialize, Serialize};

pub const MIN_PRICES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylizedStats {
    pub returns: usize,
    /// Standard deviation of the log returns.
    pub volatility: f64,
    /// Absent when the returns are constant.
    pub abs_skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    /// Rescaled-range estimate, clamped into (0, 1).
    pub hurst: Option<f64>,
}

pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

/// Last price at or before each point of a regular grid with spacing `interval`.
pub fn sample_fixed_interval(times: &[f64], prices: &[f64], interval: f64) -> Result<Vec<f64>> {
    if times.len() != prices.len() || times.is_empty() {
        return Err(PriceError::Invalid("times and prices must be non-empty and aligned".into()));
    }
    if !(interval > 0.0) {
        return Err(PriceError::Invalid(format!("interval must be positive, got {interval}")));
    }
    let (t0, t1) = (times[0], *times.last().expect("non-empty"));
    let mut out = Vec::new();
    let mut k = 0;
    let mut g = t0;
    while g <= t1 {
        while k + 1 < times.len() && times[k + 1] <= g {
            k += 1;
        }
        out.push(prices[k]);
        g += interval;
    }
    Ok(out)
}

const HURST_EPS: f64 = 1e-6;

/// Classical rescaled-range Hurst exponent over dyadic windows `8, 16, ...`
/// up to `n / 4`. `None` if no window has non-zero spread.
pub fn hurst_rs(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    let mut logw = Vec::new();
    let mut logrs = Vec::new();
    let mut w = 8;
    while w <= n / 4 {
        let mut acc = 0.0;
        let mut used = 0usize;
        for chunk in xs.chunks_exact(w) {
            let m = mean(chunk);
            let mut y = 0.0;
            let (mut lo, mut hi) = (0.0f64, 0.0f64);
            let mut ss = 0.0;
            for &x in chunk {
                y += x - m;
                lo = lo.min(y);
                hi = hi.max(y);
                ss += (x - m) * (x - m);
            }
            let s = (ss / w as f64).sqrt();
            if s > 0.0 {
                acc += (hi - lo) / s;
                used += 1;
            }
        }
        if used > 0 {
            logw.push((w as f64).ln());
            logrs.push((acc / used as f64).ln());
        }
        w *= 2;
    }
    if logw.len() < 2 {
        return None;
    }
    let (slope, _) = ols(&logw, &logrs);
    Some(slope.clamp(HURST_EPS, 1.0 - HURST_EPS))
}

/// Statistics of per-step log returns of `prices`.
pub fn stylized_stats(prices: &[f64]) -> Result<StylizedStats> {
    if prices.len() < MIN_PRICES {
        return Err(PriceError::TooShort { needed: MIN_PRICES, got: prices.len() });
    }
    if let Some(p) = prices.iter().find(|p| !(**p > 0.0)) {
        return Err(PriceError::Invalid(format!("prices must be positive, got {p}")));
    }
    let r = log_returns(prices);
    Ok(StylizedStats {
        returns: r.len(),
        volatility: std_dev(&r),
        abs_skewness: skewness(&r).map(f64::abs),
        excess_kurtosis: excess_kurtosis(&r),
        hurst: hurst_rs(&r),
    })
}
