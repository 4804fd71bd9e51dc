//! Measurement campaigns described in JSON.
//!
//! All physical fields carry their unit in the name (`length_m`, `pmd_ps`,
//! `noise_sigma` in probe-power units, ...). Omitted optional fields take the
//! documented defaults. Unknown fields are rejected.
//!
//! ```
//! use cotdr_core::scenario::Scenario;
//!
//! let s = Scenario::from_json_str(r#"{
//!     "name": "two cores",
//!     "fiber": {
//!         "cores": [ {"id": 0, "length_m": 1000.0},
//!                    {"id": 1, "length_m": 1000.0, "delay_offset_s": 0.8e-9} ],
//!         "center_core_id": 0,
//!         "tdc_ppm_per_k": 7.49,
//!         "ref_temperature_c": 20.0
//!     },
//!     "setup": {"noise_sigma": 0.05},
//!     "selected_core_groups": [[0, 1]]
//! }"#).unwrap();
//! assert_eq!(s.temperatures(), vec![20.0]);
//! assert_eq!(s.probe.golay_order, 11);
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{core_one_way_delay, FiberSpec, MeasurementSetup};
use crate::correlation::Method;
use crate::error::{Error, Result};
use crate::mps::MpsConfig;
use crate::peakfit;
use crate::waveform::{recommended_guard_s, ProbeConfig};

/// Probe generator settings. The guard interval is derived from the fiber
/// when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    #[serde(default = "default_order")]
    pub golay_order: u32,
    #[serde(default = "default_bit_rate")]
    pub bit_rate_hz: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub guard_duration_s: Option<f64>,
    #[serde(default = "default_high")]
    pub high_level: f64,
    #[serde(default)]
    pub low_level: f64,
}

fn default_order() -> u32 {
    11
}
fn default_bit_rate() -> f64 {
    10e9
}
fn default_sample_rate() -> f64 {
    50e9
}
fn default_high() -> f64 {
    1.0
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            golay_order: default_order(),
            bit_rate_hz: default_bit_rate(),
            sample_rate_hz: default_sample_rate(),
            guard_duration_s: None,
            high_level: default_high(),
            low_level: 0.0,
        }
    }
}

/// Peak processing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(default = "default_half_window")]
    pub half_window: usize,
    #[serde(default = "default_threshold")]
    pub threshold_frac: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation_s: f64,
    /// Largest distance between a peak and its core's expected round trip.
    #[serde(default = "default_tolerance")]
    pub association_tolerance_s: f64,
    /// Extra lag range correlated around the expected peaks.
    #[serde(default = "default_margin")]
    pub search_margin_s: f64,
    #[serde(default)]
    pub correlation_method: Method,
    #[serde(default = "default_constant_fraction")]
    pub constant_offset_fraction: f64,
}

fn default_half_window() -> usize {
    peakfit::DEFAULT_HALF_WINDOW
}
fn default_threshold() -> f64 {
    peakfit::DEFAULT_THRESHOLD_FRAC
}
fn default_min_separation() -> f64 {
    peakfit::DEFAULT_MIN_SEPARATION_S
}
fn default_tolerance() -> f64 {
    0.5e-9
}
fn default_margin() -> f64 {
    2e-9
}
fn default_constant_fraction() -> f64 {
    crate::analysis::DEFAULT_CONSTANT_OFFSET_FRACTION
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            half_window: default_half_window(),
            threshold_frac: default_threshold(),
            min_separation_s: default_min_separation(),
            association_tolerance_s: default_tolerance(),
            search_margin_s: default_margin(),
            correlation_method: Method::Fft,
            constant_offset_fraction: default_constant_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub fiber: FiberSpec,
    pub setup: MeasurementSetup,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default)]
    pub mps: MpsConfig,
    /// Temperatures in °C, strictly increasing. Empty means a single
    /// measurement at the fiber's reference temperature.
    #[serde(default)]
    pub sweep_c: Vec<f64>,
    /// Cores measured together; every group contains the center core.
    pub selected_core_groups: Vec<Vec<u32>>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

impl Scenario {
    /// Parses and validates a scenario; errors name the offending field and
    /// position.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(format!(
                "line {} column {}, field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        self.setup.validate()?;
        self.mps.validate()?;
        if self.sweep_c.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("sweep temperatures must be finite"));
        }
        if self.sweep_c.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sweep temperatures must be strictly increasing"));
        }
        if self.selected_core_groups.is_empty() {
            return Err(Error::config("no core groups"));
        }
        let center = self.fiber.center_core_id;
        let mut covered = BTreeSet::new();
        for (i, group) in self.selected_core_groups.iter().enumerate() {
            if !group.contains(&center) {
                return Err(Error::config(format!(
                    "group {i} {group:?} does not contain the center core {center}"
                )));
            }
            if group.len() > self.setup.split_ways as usize {
                return Err(Error::config(format!(
                    "group {i} has {} cores for a 1x{} splitter",
                    group.len(),
                    self.setup.split_ways
                )));
            }
            let unique: BTreeSet<u32> = group.iter().copied().collect();
            if unique.len() != group.len() {
                return Err(Error::config(format!("group {i} repeats a core")));
            }
            for id in group {
                if self.fiber.core(*id).is_none() {
                    return Err(Error::config(format!("group {i} names unknown core {id}")));
                }
            }
            covered.extend(unique);
        }
        let all: BTreeSet<u32> = self.fiber.core_ids().into_iter().collect();
        if covered != all {
            let missing: Vec<_> = all.difference(&covered).collect();
            return Err(Error::config(format!("core groups do not cover cores {missing:?}")));
        }
        let a = &self.analysis;
        if a.half_window == 0 || !(a.threshold_frac > 0.0 && a.threshold_frac < 1.0) {
            return Err(Error::config("invalid peak analysis settings"));
        }
        self.probe_config()?.validate()?;
        Ok(())
    }

    /// Measurement temperatures.
    pub fn temperatures(&self) -> Vec<f64> {
        if self.sweep_c.is_empty() {
            vec![self.fiber.ref_temperature_c]
        } else {
            self.sweep_c.clone()
        }
    }

    /// Temperature used to normalize the TDC and as the skew reference:
    /// the fiber's reference temperature if it is swept, else the first
    /// sweep point.
    pub fn reference_temperature(&self) -> f64 {
        let temps = self.temperatures();
        if temps.contains(&self.fiber.ref_temperature_c) {
            self.fiber.ref_temperature_c
        } else {
            temps[0]
        }
    }

    /// Longest one-way delay over all cores and temperatures.
    pub fn longest_one_way_delay_s(&self) -> f64 {
        let temps = self.temperatures();
        self.fiber
            .cores
            .iter()
            .flat_map(|c| temps.iter().map(move |&t| (c, t)))
            .map(|(c, t)| core_one_way_delay(c, &self.fiber, t))
            .fold(0.0, f64::max)
    }

    pub fn probe_config(&self) -> Result<ProbeConfig> {
        let p = &self.probe;
        if p.golay_order > crate::golay::MAX_ORDER {
            return Err(Error::config(format!("golay_order {} too large", p.golay_order)));
        }
        let mut cfg = ProbeConfig {
            bit_rate_hz: p.bit_rate_hz,
            sample_rate_hz: p.sample_rate_hz,
            guard_duration_s: 0.0,
            high_level: p.high_level,
            low_level: p.low_level,
        };
        let burst = cfg.burst_duration_s(1usize << p.golay_order);
        cfg.guard_duration_s = match p.guard_duration_s {
            Some(g) => g,
            None => recommended_guard_s(self.longest_one_way_delay_s(), burst),
        };
        Ok(cfg)
    }
}

/// Names of the bundled scenarios, one per fiber of the characterization
/// campaign.
pub const FIXTURE_NAMES: [&str; 4] = ["7core_10km", "7core_1km", "19core_5km", "19core_25km"];

/// A bundled scenario by name.
pub fn fixture(name: &str) -> Option<Scenario> {
    let text = match name {
        "7core_10km" => include_str!("../fixtures/7core_10km.json"),
        "7core_1km" => include_str!("../fixtures/7core_1km.json"),
        "19core_5km" => include_str!("../fixtures/19core_5km.json"),
        "19core_25km" => include_str!("../fixtures/19core_25km.json"),
        _ => return None,
    };
    Some(Scenario::from_json_str(text).expect("bundled fixture is valid"))
}

/// Loads a scenario from a path, falling back to a bundled fixture name.
pub fn load(path_or_name: &str) -> Result<Scenario> {
    let path = Path::new(path_or_name);
    if path.exists() {
        return Scenario::from_path(path);
    }
    fixture(path_or_name).ok_or_else(|| {
        Error::config(format!(
            "{path_or_name}: no such file or bundled fixture (known: {})",
            FIXTURE_NAMES.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "fiber": {"cores": [{"id": 0, "length_m": 100.0}, {"id": 1, "length_m": 100.0}],
                  "center_core_id": 0, "tdc_ppm_per_k": 7.49, "ref_temperature_c": 20.0},
        "setup": {"noise_sigma": 0.0},
        "selected_core_groups": [[0, 1]]
    }"#;

    #[test]
    fn defaults() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.setup.split_ways, 4);
        assert_eq!(s.setup.n_averages, 4000);
        assert_eq!(s.fiber.cores[0].end_reflectance, 0.04);
        assert_eq!(s.mps.resolution_nm, 0.05);
        assert_eq!(s.analysis.half_window, 3);
        let cfg = s.probe_config().unwrap();
        assert!(cfg.guard_duration_s > 2.0 * s.longest_one_way_delay_s());
    }

    #[test]
    fn field_diagnostics() {
        let bad = MINIMAL.replace("\"length_m\": 100.0}, {", "\"length_m\": \"x\"}, {");
        let err = Scenario::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("fiber.cores[0].length_m"), "{err}");
        assert!(err.contains("line 2"), "{err}");

        let unknown = MINIMAL.replace("\"noise_sigma\"", "\"noise_sigm\"");
        assert!(Scenario::from_json_str(&unknown).is_err());
    }

    #[test]
    fn group_rules() {
        let mut s = Scenario::from_json_str(MINIMAL).unwrap();
        s.selected_core_groups = vec![vec![1]];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        s.selected_core_groups = vec![vec![0]];
        assert!(s.validate().unwrap_err().to_string().contains("cover"));
        s.selected_core_groups = vec![vec![0, 1, 1]];
        assert!(s.validate().is_err());
        s.selected_core_groups = vec![vec![0, 1]];
        s.sweep_c = vec![10.0, 10.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn fixtures_load() {
        for name in FIXTURE_NAMES {
            let s = fixture(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(fixture("nope").is_none());
        assert!(load("nope").is_err());
        assert!(load("7core_1km").is_ok());
    }

    #[test]
    fn reference_temperature_choice() {
        let mut s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.reference_temperature(), 20.0);
        s.sweep_c = vec![10.0, 20.0, 30.0];
        assert_eq!(s.reference_temperature(), 20.0);
        s.sweep_c = vec![15.0, 25.0, 35.0];
        assert_eq!(s.reference_temperature(), 15.0);
    }
}
