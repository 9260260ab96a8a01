//! Estimators, confidence intervals and log-log fits shared by the experiments.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Ordinary least squares fit y = a + b x; returns (b, se(b)).
/// Needs at least two distinct x values; se is 0 for exactly two points.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let se = if n > 2 {
        let a = my - b * mx;
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((b, se))
}

/// Slope of log y against log x; points with non-positive coordinates are
/// rejected by the caller.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Mean and 95% half-width of i.i.d. samples.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// Ratio estimator sum(w * e) / sum(w) with a delta-method 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub half_width_95: f64,
}

pub fn ratio_estimate(weights: &[f64], events: &[bool]) -> RatioEstimate {
    let n = weights.len() as f64;
    let sw: f64 = weights.iter().sum();
    let swe: f64 = weights.iter().zip(events).filter(|(_, &e)| e).map(|(w, _)| w).sum();
    if sw <= 0.0 {
        return RatioEstimate { value: f64::NAN, half_width_95: f64::NAN };
    }
    let value = swe / sw;
    let mean_w = sw / n;
    let var = weights
        .iter()
        .zip(events)
        .map(|(w, &e)| (w * (e as u8 as f64 - value)).powi(2))
        .sum::<f64>()
        / n;
    RatioEstimate { value, half_width_95: Z95 * (var / n).sqrt() / mean_w }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    // Kolmogorov tail series
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}
