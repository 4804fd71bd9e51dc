//! Peak detection, Gaussian sub-sample fitting and core association.
//!
//! The fit is a log-parabola: `ln y = c0 + c1·x + c2·x²` by least squares over
//! `2·half_window + 1` samples around the discrete maximum. For samples of an
//! exact Gaussian it recovers the center exactly.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationTrace;
use crate::error::{Error, Result};

/// Default fit half-window in samples (7-point fit).
pub const DEFAULT_HALF_WINDOW: usize = 3;
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.5;
pub const DEFAULT_MIN_SEPARATION_S: f64 = 200e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    /// Sub-sample peak time.
    pub time_s: f64,
    pub amplitude: f64,
    /// Fitted Gaussian standard deviation.
    pub sigma_s: f64,
    pub window_halfwidth: usize,
    /// RMS residual of the fitted Gaussian over the window, relative to its amplitude.
    pub quality: f64,
}

/// Indices of the `expected_count` strongest separated local maxima, in
/// ascending order.
pub fn detect_peaks(
    c: &CorrelationTrace,
    expected_count: usize,
    min_separation_s: f64,
    threshold_frac: f64,
) -> Result<Vec<usize>> {
    if expected_count == 0 {
        return Err(Error::param("expected_count must be >= 1"));
    }
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::param("threshold_frac must lie in (0, 1)"));
    }
    let v = &c.values;
    let global = c
        .argmax()
        .map(|i| v[i])
        .ok_or_else(|| Error::param("empty correlation trace"))?;
    if !(global > 0.0) {
        return Err(Error::Resolution("correlation has no positive peak".into()));
    }
    let threshold = threshold_frac * global;
    let mut candidates: Vec<usize> = (0..v.len())
        .filter(|&i| {
            let left = i == 0 || v[i] > v[i - 1];
            let right = i + 1 == v.len() || v[i] >= v[i + 1];
            left && right && v[i] >= threshold
        })
        .collect();
    candidates.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

    let min_sep = (min_separation_s / c.dt).max(0.0);
    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        if accepted
            .iter()
            .all(|&j| (i as f64 - j as f64).abs() >= min_sep)
        {
            accepted.push(i);
        }
    }
    if accepted.len() < expected_count {
        return Err(Error::Resolution(format!(
            "found {} separable peaks, expected {expected_count}",
            accepted.len()
        )));
    }
    if accepted.len() > expected_count {
        return Err(Error::Ambiguity(format!(
            "found {} separable peaks above {:.0}% of the maximum, expected {expected_count}",
            accepted.len(),
            threshold_frac * 100.0
        )));
    }
    accepted.sort_unstable();
    Ok(accepted)
}

/// Gaussian fit around `peak_index` via least squares on `ln y`.
pub fn gaussian_subsample_fit(
    c: &CorrelationTrace,
    peak_index: usize,
    half_window: usize,
) -> Result<PeakEstimate> {
    if half_window == 0 {
        return Err(Error::param("half_window must be >= 1"));
    }
    if peak_index < half_window || peak_index + half_window >= c.len() {
        return Err(Error::param(format!(
            "fit window {}..={} outside trace of {} samples",
            peak_index as isize - half_window as isize,
            peak_index + half_window,
            c.len()
        )));
    }
    let window = &c.values[peak_index - half_window..=peak_index + half_window];
    if let Some(v) = window.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Fit(format!(
            "non-positive value {v} in fit window; window reaches the sidelobe region"
        )));
    }

    // Normal equations in x = offset from the peak index (symmetric grid, so
    // the odd moments vanish).
    let hw = half_window as f64;
    let n = 2.0 * hw + 1.0;
    let (mut s2, mut s4) = (0.0, 0.0);
    let (mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0);
    for (k, &v) in window.iter().enumerate() {
        let x = k as f64 - hw;
        let y = v.ln();
        s2 += x * x;
        s4 += x * x * x * x;
        sy += y;
        sxy += x * y;
        sx2y += x * x * y;
    }
    let c1 = sxy / s2;
    let det = n * s4 - s2 * s2;
    let c2 = (n * sx2y - s2 * sy) / det;
    let c0 = (sy * s4 - s2 * sx2y) / det;
    if !(c2 < 0.0) || !c2.is_finite() {
        return Err(Error::Fit(format!(
            "log-parabola is not concave (curvature {c2:e})"
        )));
    }

    let mu = -c1 / (2.0 * c2);
    let sigma = (-1.0 / (2.0 * c2)).sqrt();
    let amplitude = (c0 - c1 * c1 / (4.0 * c2)).exp();
    let rss: f64 = window
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let x = k as f64 - hw;
            let model = amplitude * (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp();
            (v - model).powi(2)
        })
        .sum();
    Ok(PeakEstimate {
        time_s: c.time_at(peak_index as f64 + mu),
        amplitude,
        sigma_s: sigma * c.dt,
        window_halfwidth: half_window,
        quality: (rss / n).sqrt() / amplitude,
    })
}

/// Assigns every peak to the core with the nearest nominal round trip.
///
/// Each peak must lie within `tolerance_s` of its core's nominal value and the
/// assignment must be one-to-one.
pub fn associate_peaks(
    peaks: &[PeakEstimate],
    nominal_round_trips: &BTreeMap<u32, f64>,
    tolerance_s: f64,
) -> Result<BTreeMap<u32, PeakEstimate>> {
    if peaks.len() != nominal_round_trips.len() {
        return Err(Error::param(format!(
            "{} peaks for {} cores",
            peaks.len(),
            nominal_round_trips.len()
        )));
    }
    let mut out = BTreeMap::new();
    for peak in peaks {
        let (&id, &nominal) = nominal_round_trips
            .iter()
            .min_by(|a, b| {
                (a.1 - peak.time_s)
                    .abs()
                    .total_cmp(&(b.1 - peak.time_s).abs())
            })
            .expect("non-empty by length check");
        if (nominal - peak.time_s).abs() > tolerance_s {
            return Err(Error::Ambiguity(format!(
                "peak at {:.6} us is {:.1} ps from the nearest core ({id}), tolerance {:.1} ps",
                peak.time_s * 1e6,
                (peak.time_s - nominal).abs() * 1e12,
                tolerance_s * 1e12
            )));
        }
        if out.insert(id, *peak).is_some() {
            return Err(Error::Ambiguity(format!(
                "two peaks claim core {id}"
            )));
        }
    }
    Ok(out)
}

/// CSV rows `core,time_s,amplitude,sigma_s,quality`.
pub fn write_peaks_csv<W: Write>(mut w: W, peaks: &BTreeMap<u32, PeakEstimate>) -> Result<()> {
    writeln!(w, "core,time_s,amplitude,sigma_s,quality")?;
    for (core, p) in peaks {
        writeln!(
            w,
            "{core},{:e},{:e},{:e},{:e}",
            p.time_s, p.amplitude, p.sigma_s, p.quality
        )?;
    }
    Ok(())
}
