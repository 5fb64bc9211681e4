//! Tracking error, power correlation and the radial-adjustment fit.

use super::{HarnessError, Trace};

/// Lags searched by the tracking lag estimate, in seconds.
pub const MAX_LAG_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReport {
    /// Mean absolute error over the window, percent of the target span.
    pub mad_raw: f64,
    pub mad_lag_adjusted: f64,
    pub estimated_lag: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(x, y)
}

/// Index where the default window opens: the first time the measurement
/// reaches the value of the target's first plateau.
///
/// The initial constant run of the target is skipped; the first plateau is
/// the next run of identical target values lasting at least 0.3 s.
pub fn first_detachment_index(target: &[f64], measured: &[f64], dt: f64) -> usize {
    let n = target.len();
    if n == 0 {
        return 0;
    }
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let mut i = 0;
    while i < n && same(target[i], target[0]) {
        i += 1;
    }
    let min_len = ((0.3 / dt).round() as usize).max(2);
    let mut plateau = None;
    let mut start = i;
    while start < n {
        let mut end = start + 1;
        while end < n && same(target[end], target[start]) {
            end += 1;
        }
        if end - start >= min_len {
            plateau = Some(target[start]);
            break;
        }
        start = end;
    }
    let Some(level) = plateau else { return 0 };
    let side = (target[0] - level).signum();
    measured
        .iter()
        .position(|&m| (m - level) * side <= 0.0)
        .unwrap_or(start)
}

/// Tracking error of `measured` against `target` from `start` to the end.
///
/// The error is normalized by the target's overall span (one DZ unit if the
/// target is flat). The lag is the shift in `[0, 0.5 s]` that maximizes
/// the Pearson correlation of the shifted measurement with the target; the
/// lag-adjusted error is never reported above the raw one.
pub fn tracking_metrics_at(
    t: &[f64],
    target: &[f64],
    measured: &[f64],
    start: usize,
) -> Result<TrackingReport, HarnessError> {
    let n = target.len();
    if start >= n || t.len() != n || measured.len() != n {
        return Err(HarnessError::EmptyWindow);
    }
    let dt = if n >= 2 { t[1] - t[0] } else { 1.0 / 30.0 };
    let (lo, hi) = target
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mad = |lag: usize| -> Option<f64> {
        let pairs = (start..n.saturating_sub(lag)).map(|i| (measured[i + lag] - target[i]).abs());
        let (sum, count) = pairs.fold((0.0, 0usize), |(s, c), e| (s + e, c + 1));
        (count > 0).then(|| 100.0 * sum / count as f64 / span)
    };
    let mad_raw = mad(0).ok_or(HarnessError::EmptyWindow)?;

    let max_lag = (MAX_LAG_S / dt).round() as usize;
    let mut best = (0usize, f64::NEG_INFINITY);
    for lag in 0..=max_lag {
        if start + lag + 2 > n {
            break;
        }
        let tgt = &target[start..n - lag];
        let msr = &measured[start + lag..n];
        if let Some(r) = pearson(tgt, msr) {
            if r > best.1 {
                best = (lag, r);
            }
        }
    }
    let lag = best.0;
    let lagged = mad(lag).unwrap_or(mad_raw);
    Ok(TrackingReport {
        mad_raw,
        mad_lag_adjusted: lagged.min(mad_raw),
        estimated_lag: lag as f64 * dt,
        window: (t[start], t[n - 1]),
        samples: n - start,
    })
}

/// Tracking metrics over the default post-detachment window.
pub fn tracking_metrics(trace: &Trace) -> Result<TrackingReport, HarnessError> {
    let t = trace.column(|r| r.t);
    let target = trace.column(|r| r.target);
    let measured = trace.column(|r| r.dz_measured);
    let dt = trace.dt().unwrap_or(1.0 / 30.0);
    let start = first_detachment_index(&target, &measured, dt);
    tracking_metrics_at(&t, &target, &measured, start)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub in_window: usize,
    pub kept: usize,
    pub r: f64,
}

/// Pearson r between `dz^2` and the power proxy for samples with
/// `0.65 < sqrt(dz) < 1.1`, after dropping points whose residual from a
/// linear fit of proxy on `dz^2` has a standard score above 2.
pub fn correlate(
    dz: &[f64],
    prad: &[f64],
    window: (f64, f64),
) -> Result<CorrelationReport, HarnessError> {
    let (x, y): (Vec<f64>, Vec<f64>) = dz
        .iter()
        .zip(prad)
        .filter(|(d, p)| {
            **d >= 0.0 && p.is_finite() && {
                let s = d.sqrt();
                s > window.0 && s < window.1
            }
        })
        .map(|(d, p)| (d * d, *p))
        .unzip();
    let in_window = x.len();
    if in_window < 10 {
        return Err(HarnessError::InsufficientSamples(in_window));
    }
    let (a, b) = ols(&x, &y).ok_or(HarnessError::InsufficientSamples(in_window))?;
    let res: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| yi - (a + b * xi)).collect();
    let n = res.len() as f64;
    let mean = res.iter().sum::<f64>() / n;
    let sd = (res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    let keep: Vec<bool> = res
        .iter()
        .map(|r| sd == 0.0 || ((r - mean) / sd).abs() <= 2.0)
        .collect();
    let xs: Vec<f64> = x
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .collect();
    let ys: Vec<f64> = y
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .collect();
    if xs.len() < 10 {
        return Err(HarnessError::InsufficientSamples(xs.len()));
    }
    let r = pearson(&xs, &ys).ok_or(HarnessError::InsufficientSamples(xs.len()))?;
    Ok(CorrelationReport {
        in_window,
        kept: xs.len(),
        r,
    })
}

/// Intercept and slope of the least-squares line `y = a + b x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    pub intercept: f64,
    pub samples: usize,
}

/// Minimum variance of `r_x` (m^2) for a trace to count as a sweep.
pub const SWEEP_MIN_VAR: f64 = 1e-6;

/// Slope of `z_e - true_front_z` against `(r_x - r_edge)(z_x - z_s)`.
pub fn fit_adjust_alpha(trace: &Trace, r_edge: f64) -> Result<AlphaFit, HarnessError> {
    let rx = trace.column(|r| r.r_x);
    let n = rx.len();
    if n < 3 {
        return Err(HarnessError::NoSweepDetected);
    }
    let mean = rx.iter().sum::<f64>() / n as f64;
    let var = rx.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var < SWEEP_MIN_VAR {
        return Err(HarnessError::NoSweepDetected);
    }
    let x = trace.column(|r| (r.r_x - r_edge) * (r.z_x - r.z_s));
    let y = trace.column(|r| r.z_e - r.true_front_z);
    let (intercept, alpha) = ols(&x, &y).ok_or(HarnessError::NoSweepDetected)?;
    Ok(AlphaFit {
        alpha,
        intercept,
        samples: n,
    })
}

/// Coefficient of determination of predictions against truth.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };
    }
    1.0 - ss_res / ss_tot
}
