//! Reported quantities: skews, temperature delay coefficients, skew wander
//! over temperature and the C-OTDR / MPS comparison.
//!
//! Skews are one-way delays relative to the fiber's center core.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skew budget for 30° phase error at 26 GHz.
pub const SKEW_BUDGET_S: f64 = 3.2e-12;

/// Temperature delay coefficient of standard single-mode fiber.
pub const SMF_TDC_PPM_PER_K: f64 = 7.49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayMethod {
    Cotdr,
    Mps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayMeasurement {
    pub core_id: u32,
    pub round_trip_s: f64,
    pub one_way_s: f64,
    pub temperature_c: f64,
    pub method: DelayMethod,
}

impl DelayMeasurement {
    pub fn from_round_trip(core_id: u32, round_trip_s: f64, temperature_c: f64, method: DelayMethod) -> Self {
        DelayMeasurement {
            core_id,
            round_trip_s,
            one_way_s: round_trip_s / 2.0,
            temperature_c,
            method,
        }
    }

    pub fn from_one_way(core_id: u32, one_way_s: f64, temperature_c: f64, method: DelayMethod) -> Self {
        DelayMeasurement {
            core_id,
            round_trip_s: 2.0 * one_way_s,
            one_way_s,
            temperature_c,
            method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdcFit {
    pub tdc_ppm_per_k: f64,
    /// Delay extrapolated to 0 °C.
    pub intercept_s: f64,
    /// Fitted delay change per kelvin.
    pub slope_s_per_k: f64,
    pub rms_residual_s: f64,
    pub r_squared: f64,
}

/// `skew_i = one_way_i − one_way_center` for one temperature and method.
pub fn skew_vs_center(delays: &[DelayMeasurement], center_id: u32) -> Result<BTreeMap<u32, f64>> {
    let center = delays
        .iter()
        .find(|d| d.core_id == center_id)
        .ok_or_else(|| Error::param(format!("center core {center_id} missing")))?;
    if let Some(d) = delays
        .iter()
        .find(|d| d.temperature_c != center.temperature_c || d.method != center.method)
    {
        return Err(Error::param(format!(
            "core {} was measured at a different temperature or with another method",
            d.core_id
        )));
    }
    let mut out = BTreeMap::new();
    for d in delays {
        let skew = if d.core_id == center_id {
            0.0
        } else {
            d.one_way_s - center.one_way_s
        };
        if out.insert(d.core_id, skew).is_some() {
            return Err(Error::param(format!("core {} measured twice", d.core_id)));
        }
    }
    Ok(out)
}

/// Ordinary least squares of delay versus temperature. The coefficient is
/// normalized by the fitted delay at `reference_t`.
pub fn fit_tdc(series: &[(f64, f64)], reference_t: f64) -> Result<TdcFit> {
    let distinct: BTreeSet<u64> = series.iter().map(|(t, _)| t.to_bits()).collect();
    if series.len() < 3 || distinct.len() < 3 {
        return Err(Error::param(format!(
            "TDC fit needs at least 3 distinct temperatures, got {}",
            distinct.len()
        )));
    }
    let n = series.len() as f64;
    let mean_t = series.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_d = series.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut std_, mut sdd) = (0.0, 0.0, 0.0);
    for &(t, d) in series {
        let (dt, dd) = (t - mean_t, d - mean_d);
        stt += dt * dt;
        std_ += dt * dd;
        sdd += dd * dd;
    }
    if !(stt > 0.0) {
        return Err(Error::param("degenerate temperature values"));
    }
    let slope = std_ / stt;
    let intercept = mean_d - slope * mean_t;
    let rss: f64 = series
        .iter()
        .map(|&(t, d)| (d - (intercept + slope * t)).powi(2))
        .sum();
    let at_ref = intercept + slope * reference_t;
    let r_squared = if sdd > 0.0 {
        (1.0 - rss / sdd).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(TdcFit {
        tdc_ppm_per_k: slope / at_ref * 1e6,
        intercept_s: intercept,
        slope_s_per_k: slope,
        rms_residual_s: (rss / n).sqrt(),
        r_squared,
    })
}

/// Largest `|skew(T) − skew(T_ref)|` per core over a temperature sweep.
pub fn skew_over_temperature(
    series: &[(f64, BTreeMap<u32, f64>)],
    reference_t: f64,
    center_id: u32,
) -> Result<BTreeMap<u32, f64>> {
    let reference = series
        .iter()
        .find(|(t, _)| *t == reference_t)
        .map(|(_, m)| m)
        .ok_or_else(|| Error::param(format!("reference temperature {reference_t} not in series")))?;
    if !reference.contains_key(&center_id) {
        return Err(Error::param(format!("center core {center_id} missing")));
    }
    let ids: BTreeSet<u32> = reference.keys().copied().collect();
    let mut out: BTreeMap<u32, f64> = ids.iter().map(|&id| (id, 0.0)).collect();
    for (t, skews) in series {
        if skews.keys().copied().collect::<BTreeSet<_>>() != ids {
            return Err(Error::param(format!("core set at {t} degC differs from reference")));
        }
        for (id, s) in skews {
            let e = out.get_mut(id).expect("same key set");
            *e = e.max((s - reference[id]).abs());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub mean_offset_s: f64,
    pub std_offset_s: f64,
    /// `mps.one_way − cotdr.one_way` per core.
    pub per_core_offsets: BTreeMap<u32, f64>,
    pub constant_offset: bool,
}

/// Default spread, relative to the mean, below which the offset counts as constant.
pub const DEFAULT_CONSTANT_OFFSET_FRACTION: f64 = 0.1;

/// Offsets of the MPS delays relative to the C-OTDR delays.
///
/// The offset is "constant" when its population standard deviation is at
/// most `constant_fraction · |mean|`.
pub fn compare_methods(
    cotdr: &[DelayMeasurement],
    mps: &[DelayMeasurement],
    constant_fraction: f64,
) -> Result<MethodComparison> {
    let index = |list: &[DelayMeasurement], which: DelayMethod| -> Result<BTreeMap<u32, DelayMeasurement>> {
        let mut m = BTreeMap::new();
        for d in list {
            if d.method != which {
                return Err(Error::param(format!("core {} has the wrong method tag", d.core_id)));
            }
            if m.insert(d.core_id, *d).is_some() {
                return Err(Error::param(format!("core {} listed twice", d.core_id)));
            }
        }
        Ok(m)
    };
    let a = index(cotdr, DelayMethod::Cotdr)?;
    let b = index(mps, DelayMethod::Mps)?;
    if a.is_empty() || !a.keys().eq(b.keys()) {
        return Err(Error::param("C-OTDR and MPS core sets differ"));
    }
    if a.values().zip(b.values()).any(|(x, y)| x.temperature_c != y.temperature_c) {
        return Err(Error::param("C-OTDR and MPS temperatures differ"));
    }
    let per_core: BTreeMap<u32, f64> = a
        .iter()
        .map(|(&id, d)| (id, b[&id].one_way_s - d.one_way_s))
        .collect();
    let n = per_core.len() as f64;
    let mean = per_core.values().sum::<f64>() / n;
    let std = (per_core.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(MethodComparison {
        mean_offset_s: mean,
        std_offset_s: std,
        per_core_offsets: per_core,
        constant_offset: std <= constant_fraction * mean.abs(),
    })
}
