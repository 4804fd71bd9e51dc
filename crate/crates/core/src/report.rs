//! Measurement reports and their JSON/CSV renderings.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{DelayMeasurement, MethodComparison, TdcFit};
use crate::error::{Error, Result};
use crate::pipeline::GroupResult;
use crate::scenario::Scenario;

/// Results at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureResult {
    pub temperature_c: f64,
    pub groups: Vec<GroupResult>,
    /// One C-OTDR delay per core.
    pub delays: Vec<DelayMeasurement>,
    /// One-way delay relative to the center core.
    pub skews_s: BTreeMap<u32, f64>,
}

/// Fiber summary: length, PMD spread and delay-difference range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub fiber: String,
    pub cores: usize,
    pub length_km: f64,
    pub pmd_min_ps: f64,
    pub pmd_max_ps: f64,
    pub pmd_avg_ps: f64,
    /// Smallest and largest skew of the outer cores, in ns.
    pub skew_min_ns: f64,
    pub skew_max_ns: f64,
}

impl Table1Row {
    pub fn new(scenario: &Scenario, pmd_s: &BTreeMap<u32, f64>, skews_s: &BTreeMap<u32, f64>) -> Self {
        let pmd: Vec<f64> = pmd_s.values().map(|p| p * 1e12).collect();
        let center = scenario.fiber.center_core_id;
        let skews: Vec<f64> = skews_s
            .iter()
            .filter(|(id, _)| **id != center)
            .map(|(_, s)| s * 1e9)
            .collect();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Table1Row {
            fiber: scenario.name.clone(),
            cores: scenario.fiber.cores.len(),
            length_km: scenario.fiber.center().length_m / 1000.0,
            pmd_min_ps: min(&pmd),
            pmd_max_ps: max(&pmd),
            pmd_avg_ps: pmd.iter().sum::<f64>() / pmd.len().max(1) as f64,
            skew_min_ns: if skews.is_empty() { 0.0 } else { min(&skews) },
            skew_max_ns: if skews.is_empty() { 0.0 } else { max(&skews) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub scenario: String,
    pub seed: u64,
    pub center_core_id: u32,
    pub reference_temperature_c: f64,
    pub temperatures: Vec<TemperatureResult>,
    /// Per-core delay temperature coefficient; empty for a single temperature.
    pub tdc: BTreeMap<u32, TdcFit>,
    /// Largest skew change against the reference temperature.
    pub skew_excursions_s: BTreeMap<u32, f64>,
    pub pmd_s: BTreeMap<u32, f64>,
    pub mps_delays: Vec<DelayMeasurement>,
    pub method_comparison: MethodComparison,
    pub table1: Table1Row,
}

impl MeasurementReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    /// Results at the reference temperature.
    pub fn at_reference(&self) -> &TemperatureResult {
        self.temperatures
            .iter()
            .find(|t| t.temperature_c == self.reference_temperature_c)
            .expect("reference temperature is always measured")
    }

    /// Rows `temperature_c,core,round_trip_s,one_way_s,skew_s`.
    pub fn write_delays_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "temperature_c,core,round_trip_s,one_way_s,skew_s")?;
        for t in &self.temperatures {
            for d in &t.delays {
                writeln!(
                    w,
                    "{},{},{:e},{:e},{:e}",
                    t.temperature_c, d.core_id, d.round_trip_s, d.one_way_s, t.skews_s[&d.core_id]
                )?;
            }
        }
        Ok(())
    }

    /// Rows `core,tdc_ppm_per_k,r_squared,rms_residual_s,skew_excursion_s`.
    pub fn write_tdc_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "core,tdc_ppm_per_k,r_squared,rms_residual_s,skew_excursion_s")?;
        for (id, fit) in &self.tdc {
            writeln!(
                w,
                "{id},{},{},{:e},{:e}",
                fit.tdc_ppm_per_k, fit.r_squared, fit.rms_residual_s, self.skew_excursions_s[id]
            )?;
        }
        Ok(())
    }

    /// Rows `core,cotdr_one_way_s,mps_one_way_s,offset_s`, then the summary.
    pub fn write_comparison_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.method_comparison;
        writeln!(w, "core,cotdr_one_way_s,mps_one_way_s,offset_s")?;
        for (d, m) in self.at_reference().delays.iter().zip(&self.mps_delays) {
            writeln!(
                w,
                "{},{:e},{:e},{:e}",
                d.core_id, d.one_way_s, m.one_way_s, c.per_core_offsets[&d.core_id]
            )?;
        }
        writeln!(w, "mean,,,{:e}", c.mean_offset_s)?;
        writeln!(w, "std,,,{:e}", c.std_offset_s)?;
        Ok(())
    }
}

/// Table rows in the fiber summary layout.
pub fn write_table1_text<W: Write>(mut w: W, rows: &[Table1Row]) -> Result<()> {
    writeln!(
        w,
        "{:<14} {:>5} {:>11} {:>23} {:>16} {:>27}",
        "fiber", "cores", "length (km)", "PMD min/max (ps)", "PMD avg (ps)", "delay diff min/max (ns)"
    )?;
    for r in rows {
        writeln!(
            w,
            "{:<14} {:>5} {:>11.1} {:>23} {:>16.2} {:>27}",
            r.fiber,
            r.cores,
            r.length_km,
            format!("{:.2}/{:.2}", r.pmd_min_ps, r.pmd_max_ps),
            r.pmd_avg_ps,
            format!("{:.2}/{:.2}", r.skew_min_ns, r.skew_max_ns)
        )?;
    }
    Ok(())
}

/// Same rows as CSV.
pub fn write_table1_csv<W: Write>(mut w: W, rows: &[Table1Row]) -> Result<()> {
    writeln!(
        w,
        "fiber,cores,length_km,pmd_min_ps,pmd_max_ps,pmd_avg_ps,skew_min_ns,skew_max_ns"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.fiber, r.cores, r.length_km, r.pmd_min_ps, r.pmd_max_ps, r.pmd_avg_ps, r.skew_min_ns, r.skew_max_ns
        )?;
    }
    Ok(())
}
