//! Matched filtering of receive traces against the bipolar references.
//!
//! Only "valid" lags are produced: for lag `j` the whole reference overlaps
//! the receive trace, `C(j) = Σ_i rx[i+j]·ref[i]`. The receive trace is
//! mean-subtracted first so that the unipolar optical pedestal does not leak
//! into the correlation.

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    #[default]
    Fft,
}

/// Correlation amplitude versus lag time. Value `j` belongs to lag time
/// `t0 + j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl CorrelationTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: f64) -> f64 {
        self.t0 + i * self.dt
    }

    /// Index of the largest value.
    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lag_seconds,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:e},{v:e}", self.time_at(i as f64))?;
        }
        Ok(())
    }
}

fn check_inputs(rx: &Trace, reference: &Trace) -> Result<()> {
    if reference.is_empty() {
        return Err(Error::param("empty reference"));
    }
    if reference.len() > rx.len() {
        return Err(Error::param(format!(
            "reference ({} samples) is longer than the receive trace ({})",
            reference.len(),
            rx.len()
        )));
    }
    let tol = 1e-12 * rx.dt.abs().max(reference.dt.abs());
    if (rx.dt - reference.dt).abs() > tol {
        return Err(Error::param(format!(
            "sample periods differ: {} vs {}",
            rx.dt, reference.dt
        )));
    }
    Ok(())
}

/// Full valid-lag cross-correlation.
pub fn cross_correlate(rx: &Trace, reference: &Trace, method: Method) -> Result<CorrelationTrace> {
    check_inputs(rx, reference)?;
    let lags = rx.len() - reference.len() + 1;
    cross_correlate_window(rx, reference, 0, lags, method)
}

/// Cross-correlation over lags `first_lag .. first_lag + lag_count`.
///
/// The mean subtracted from `rx` is that of the whole trace, so a window is
/// exactly the corresponding slice of [`cross_correlate`]'s output.
pub fn cross_correlate_window(
    rx: &Trace,
    reference: &Trace,
    first_lag: usize,
    lag_count: usize,
    method: Method,
) -> Result<CorrelationTrace> {
    check_inputs(rx, reference)?;
    let m = reference.len();
    let valid = rx.len() - m + 1;
    if lag_count == 0 || first_lag + lag_count > valid {
        return Err(Error::param(format!(
            "lag window {first_lag}..{} outside valid range 0..{valid}",
            first_lag + lag_count
        )));
    }
    let mean = rx.mean();
    let segment: Vec<f64> = rx.samples[first_lag..first_lag + lag_count + m - 1]
        .iter()
        .map(|v| v - mean)
        .collect();
    let values = match method {
        Method::Direct => correlate_direct(&segment, &reference.samples),
        Method::Fft => correlate_fft(&segment, &reference.samples),
    };
    debug_assert_eq!(values.len(), lag_count);
    Ok(CorrelationTrace {
        t0: rx.t0 + first_lag as f64 * rx.dt - reference.t0,
        dt: rx.dt,
        values,
    })
}

fn correlate_direct(x: &[f64], r: &[f64]) -> Vec<f64> {
    (0..=x.len() - r.len())
        .map(|j| x[j..j + r.len()].iter().zip(r).map(|(a, b)| a * b).sum())
        .collect()
}

fn correlate_fft(x: &[f64], r: &[f64]) -> Vec<f64> {
    // Circular correlation of length n >= len(x) equals the linear one on
    // every valid lag.
    let n = x.len().next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    xs.resize(n, Complex64::new(0.0, 0.0));
    let mut rs: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    rs.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut xs);
    fwd.process(&mut rs);
    for (a, b) in xs.iter_mut().zip(&rs) {
        *a *= b.conj();
    }
    inv.process(&mut xs);
    let scale = 1.0 / n as f64;
    xs[..=x.len() - r.len()].iter().map(|c| c.re * scale).collect()
}

/// Elementwise sum of the `a` and `b` correlations.
pub fn complementary_sum(ca: &CorrelationTrace, cb: &CorrelationTrace) -> Result<CorrelationTrace> {
    let tol = 1e-12 * ca.dt.abs();
    if ca.len() != cb.len() || (ca.dt - cb.dt).abs() > tol || (ca.t0 - cb.t0).abs() > tol {
        return Err(Error::param(format!(
            "correlation shapes differ: ({}, {}, {}) vs ({}, {}, {})",
            ca.t0,
            ca.dt,
            ca.len(),
            cb.t0,
            cb.dt,
            cb.len()
        )));
    }
    Ok(CorrelationTrace {
        t0: ca.t0,
        dt: ca.dt,
        values: ca.values.iter().zip(&cb.values).map(|(a, b)| a + b).collect(),
    })
}
