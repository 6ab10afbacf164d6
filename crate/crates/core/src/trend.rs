//! Tail trend test used as the numerical stand-in for limits.
//!
//! A least-squares line is fitted to the last part of a trace. A clear slope
//! decides growth or decay; a flat tail inside the band decides stability;
//! everything else is reported as undetermined.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    /// slope threshold, in log units per unit of x (per decade when x is log10)
    pub tau: f64,
    /// stability band in log units
    pub band: f64,
    pub tail_fraction: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig { tau: 0.1, band: 2.0, tail_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendClass {
    Increasing,
    Decreasing,
    Stable,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope: f64,
    /// max |y - mean| over the tail
    pub spread: f64,
    /// x extent of the tail
    pub span: f64,
    pub class: TrendClass,
}

fn tail_start(n: usize, frac: f64) -> usize {
    let k = ((n as f64) * frac).ceil() as usize;
    n - k.clamp(3.min(n), n)
}

/// Least-squares fit over the tail. Non-finite values are resolved before the
/// fit: +inf anywhere in the tail means growth, a tail ending in -inf means decay.
pub fn fit_tail(x: &[f64], y: &[f64], frac: f64) -> Trend {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let start = tail_start(n, frac);
    let (xt, yt) = (&x[start..], &y[start..]);
    let span = xt.last().copied().unwrap_or(0.0) - xt.first().copied().unwrap_or(0.0);
    let undetermined = Trend { slope: f64::NAN, spread: f64::NAN, span, class: TrendClass::Undetermined };
    if yt.iter().any(|v| v.is_nan()) || yt.len() < 2 {
        return undetermined;
    }
    if yt.iter().any(|v| *v == f64::INFINITY) {
        return Trend { slope: f64::INFINITY, spread: f64::INFINITY, span, class: TrendClass::Increasing };
    }
    if yt.last() == Some(&f64::NEG_INFINITY) {
        return Trend { slope: f64::NEG_INFINITY, spread: f64::INFINITY, span, class: TrendClass::Decreasing };
    }
    let pts: Vec<(f64, f64)> = xt.iter().zip(yt).filter(|(_, v)| v.is_finite()).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 2 {
        return undetermined;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return undetermined;
    }
    let slope = sxy / sxx;
    let spread = pts.iter().map(|p| (p.1 - my).abs()).fold(0.0, f64::max);
    Trend { slope, spread, span, class: TrendClass::Undetermined }
}

/// Slope-based classification (threshold `tau` per unit x).
pub fn classify(x: &[f64], y: &[f64], cfg: &TrendConfig) -> Trend {
    let mut t = fit_tail(x, y, cfg.tail_fraction);
    if t.class != TrendClass::Undetermined || t.slope.is_nan() {
        return t;
    }
    t.class = if t.slope > cfg.tau {
        TrendClass::Increasing
    } else if t.slope < -cfg.tau {
        TrendClass::Decreasing
    } else if t.spread <= cfg.band {
        TrendClass::Stable
    } else {
        TrendClass::Undetermined
    };
    t
}

/// Classification by the fitted total change across the tail, `slope * span`,
/// against a threshold `delta`.
pub fn classify_total(x: &[f64], y: &[f64], delta: f64, cfg: &TrendConfig) -> Trend {
    let mut t = fit_tail(x, y, cfg.tail_fraction);
    if t.class != TrendClass::Undetermined || t.slope.is_nan() {
        return t;
    }
    let change = t.slope * t.span;
    t.class = if change >= delta {
        TrendClass::Increasing
    } else if change <= -delta {
        TrendClass::Decreasing
    } else if t.spread <= cfg.band {
        TrendClass::Stable
    } else {
        TrendClass::Undetermined
    };
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xs(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn linear_growth_and_decay() {
        let x = xs(20);
        let up: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        let down: Vec<f64> = x.iter().map(|v| -0.5 * v).collect();
        let cfg = TrendConfig::default();
        assert_eq!(classify(&x, &up, &cfg).class, TrendClass::Increasing);
        assert_eq!(classify(&x, &down, &cfg).class, TrendClass::Decreasing);
        assert!((classify(&x, &up, &cfg).slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_and_noisy() {
        let x = xs(21);
        let flat: Vec<f64> = x.iter().map(|v| (v * 1.3).sin() * 0.2).collect();
        let wild: Vec<f64> = x.iter().map(|v| if (*v as usize) % 2 == 0 { 5.0 } else { -5.0 }).collect();
        let cfg = TrendConfig::default();
        assert_eq!(classify(&x, &flat, &cfg).class, TrendClass::Stable);
        assert_eq!(classify(&x, &wild, &cfg).class, TrendClass::Undetermined);
    }

    #[test]
    fn infinities() {
        let x = xs(10);
        let mut y = vec![0.0; 10];
        y[9] = f64::NEG_INFINITY;
        assert_eq!(classify(&x, &y, &TrendConfig::default()).class, TrendClass::Decreasing);
        y[9] = f64::INFINITY;
        assert_eq!(classify(&x, &y, &TrendConfig::default()).class, TrendClass::Increasing);
    }

    #[test]
    fn total_change() {
        let x = xs(40);
        let y: Vec<f64> = x.iter().map(|v| -0.05 * v).collect();
        let t = classify_total(&x, &y, 0.3, &TrendConfig::default());
        assert_eq!(t.class, TrendClass::Decreasing);
        let t = classify(&x, &y, &TrendConfig::default());
        assert_eq!(t.class, TrendClass::Stable);
    }
}
