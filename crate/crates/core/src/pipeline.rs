//! End-to-end measurement runs.
//!
//! A run is a list of acquisitions, one per (temperature, core group). Each
//! acquisition is simulated, quantized to the stored `f32` precision,
//! analyzed and dropped before the next one starts, so memory stays bounded
//! by a single pair of receive traces even for long fibers.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, DelayMeasurement, DelayMethod};
use crate::channel::{core_one_way_delay, simulate_receive_trace};
use crate::correlation::{complementary_sum, cross_correlate_window, CorrelationTrace};
use crate::error::{Error, Result};
use crate::golay::{generate_golay, GolayPair};
use crate::mps::{self, BirefringentSegment, DispersionModel};
use crate::peakfit::{self, PeakEstimate};
use crate::report::{MeasurementReport, Table1Row, TemperatureResult};
use crate::scenario::Scenario;
use crate::seed;
use crate::trace_io;
use crate::waveform::{bipolar_reference, build_probe, Trace};

/// Averaged receive traces of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub temperature_c: f64,
    pub cores: Vec<u32>,
    pub rx_a: Trace,
    pub rx_b: Trace,
}

/// Peaks and delays extracted from one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub temperature_c: f64,
    pub cores: Vec<u32>,
    pub reference_peak: PeakEstimate,
    /// Core peaks, times relative to the start of the lag axis.
    pub peaks: BTreeMap<u32, PeakEstimate>,
    /// Round trips measured from the reference reflection.
    pub delays: Vec<DelayMeasurement>,
}

/// Knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 or 1 runs sequentially. Every worker holds one
    /// acquisition in memory.
    pub threads: usize,
    /// Write every acquisition as COTR traces plus a manifest here.
    pub dump_dir: Option<PathBuf>,
}

/// Probe generator and simulated fiber.
pub struct Simulator {
    scenario: Scenario,
    probe_a: Trace,
    probe_b: Trace,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let pair = generate_golay(scenario.probe.golay_order)?;
        let (probe_a, probe_b) = build_probe(&pair, &scenario.probe_config()?)?;
        Ok(Simulator {
            scenario: scenario.clone(),
            probe_a,
            probe_b,
        })
    }

    /// Simulates one acquisition, rounded to the `f32` storage precision.
    pub fn acquire(&self, temperature_c: f64, cores: &[u32]) -> Result<Acquisition> {
        let s = &self.scenario;
        let (mut rx_a, mut rx_b) = simulate_receive_trace(
            &self.probe_a,
            &self.probe_b,
            &s.fiber,
            &s.setup,
            cores,
            temperature_c,
        )
        .map_err(|e| e.in_context(temperature_c, cores))?;
        rx_a.quantize_f32();
        rx_b.quantize_f32();
        Ok(Acquisition {
            temperature_c,
            cores: cores.to_vec(),
            rx_a,
            rx_b,
        })
    }
}

/// Matched filters and peak processing for one scenario.
pub struct Analyzer {
    scenario: Scenario,
    ref_a: Trace,
    ref_b: Trace,
}

impl Analyzer {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let pair: GolayPair = generate_golay(scenario.probe.golay_order)?;
        let (ref_a, ref_b) = bipolar_reference(&pair, &scenario.probe_config()?)?;
        Ok(Analyzer {
            scenario: scenario.clone(),
            ref_a,
            ref_b,
        })
    }

    /// Expected round trips of `cores` at `temperature_c` from the fiber model.
    pub fn nominal_round_trips(&self, temperature_c: f64, cores: &[u32]) -> Result<BTreeMap<u32, f64>> {
        let fiber = &self.scenario.fiber;
        cores
            .iter()
            .map(|&id| {
                let core = fiber
                    .core(id)
                    .ok_or_else(|| Error::param(format!("unknown core {id}")))?;
                Ok((id, 2.0 * core_one_way_delay(core, fiber, temperature_c)))
            })
            .collect()
    }

    fn correlate(&self, acq: &Acquisition, first_lag: usize, count: usize) -> Result<CorrelationTrace> {
        let method = self.scenario.analysis.correlation_method;
        let ca = cross_correlate_window(&acq.rx_a, &self.ref_a, first_lag, count, method)?;
        let cb = cross_correlate_window(&acq.rx_b, &self.ref_b, first_lag, count, method)?;
        complementary_sum(&ca, &cb)
    }

    /// Complementary correlation over the lags that hold the reference
    /// reflection and the core reflections.
    pub fn correlation_windows(&self, acq: &Acquisition) -> Result<(CorrelationTrace, CorrelationTrace)> {
        let a = &self.scenario.analysis;
        let dt = acq.rx_a.dt;
        if acq.rx_a.len() != acq.rx_b.len() || acq.rx_b.dt != dt || acq.rx_a.t0 != acq.rx_b.t0 {
            return Err(Error::Format("a and b traces differ in timing".into()));
        }
        if acq.rx_a.len() < self.ref_a.len() || self.ref_a.dt != dt {
            return Err(Error::Format(
                "receive trace does not match the scenario's probe".into(),
            ));
        }
        let valid = acq.rx_a.len() - self.ref_a.len() + 1;
        let margin = ((a.search_margin_s / dt).ceil() as usize).max(a.half_window + 2);
        // Lag whose time is zero, i.e. the reference reflection.
        let zero = (-acq.rx_a.t0 / dt).round().max(0.0) as usize;

        let ref_lo = zero.saturating_sub(margin);
        let ref_hi = (zero + margin).min(valid - 1);

        let nominal = self.nominal_round_trips(acq.temperature_c, &acq.cores)?;
        let lag = |t: f64| zero as f64 + t / dt;
        let lo = nominal.values().map(|&t| lag(t)).fold(f64::INFINITY, f64::min);
        let hi = nominal.values().map(|&t| lag(t)).fold(0.0, f64::max);
        let core_lo = (lo.floor() as usize).saturating_sub(margin);
        let core_hi = (hi.ceil() as usize + margin).min(valid - 1);
        if core_lo <= ref_hi {
            return Err(Error::config(format!(
                "core reflections within {:.3} ns of the reference reflection",
                (core_lo as f64 - zero as f64 + margin as f64) * dt * 1e9
            )));
        }
        if core_hi <= core_lo {
            return Err(Error::config("receive trace ends before the core reflections"));
        }
        let reference = self.correlate(acq, ref_lo, ref_hi - ref_lo + 1)?;
        let cores = self.correlate(acq, core_lo, core_hi - core_lo + 1)?;
        Ok((reference, cores))
    }

    /// Locates the reference and core peaks and converts them to round trips.
    pub fn analyze(&self, acq: &Acquisition) -> Result<GroupResult> {
        self.analyze_inner(acq)
            .map_err(|e| e.in_context(acq.temperature_c, &acq.cores))
    }

    fn analyze_inner(&self, acq: &Acquisition) -> Result<GroupResult> {
        let a = &self.scenario.analysis;
        let (ref_corr, core_corr) = self.correlation_windows(acq)?;

        let ref_idx = peakfit::detect_peaks(&ref_corr, 1, a.min_separation_s, a.threshold_frac)?;
        let reference_peak = peakfit::gaussian_subsample_fit(&ref_corr, ref_idx[0], a.half_window)?;

        let idx = peakfit::detect_peaks(
            &core_corr,
            acq.cores.len(),
            a.min_separation_s,
            a.threshold_frac,
        )?;
        let fitted = idx
            .iter()
            .map(|&i| peakfit::gaussian_subsample_fit(&core_corr, i, a.half_window))
            .collect::<Result<Vec<_>>>()?;
        let nominal = self.nominal_round_trips(acq.temperature_c, &acq.cores)?;
        let nominal_times: BTreeMap<u32, f64> = nominal
            .iter()
            .map(|(&id, &t)| (id, reference_peak.time_s + t))
            .collect();
        let peaks = peakfit::associate_peaks(&fitted, &nominal_times, a.association_tolerance_s)?;
        let delays = acq
            .cores
            .iter()
            .map(|id| {
                DelayMeasurement::from_round_trip(
                    *id,
                    peaks[id].time_s - reference_peak.time_s,
                    acq.temperature_c,
                    DelayMethod::Cotdr,
                )
            })
            .collect();
        Ok(GroupResult {
            temperature_c: acq.temperature_c,
            cores: acq.cores.clone(),
            reference_peak,
            peaks,
            delays,
        })
    }
}

/// One stored acquisition in a trace directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub temperature_c: f64,
    pub cores: Vec<u32>,
    pub trace_a: String,
    pub trace_b: String,
}

/// Index of a trace directory: the scenario plus its acquisitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub acquisitions: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn jobs(scenario: &Scenario) -> Vec<(f64, Vec<u32>)> {
    scenario
        .temperatures()
        .into_iter()
        .flat_map(|t| scenario.selected_core_groups.iter().map(move |g| (t, g.clone())))
        .collect()
}

fn entry_for(index: usize, temperature_c: f64, cores: &[u32]) -> ManifestEntry {
    let stem = format!("acq{index:03}");
    ManifestEntry {
        temperature_c,
        cores: cores.to_vec(),
        trace_a: format!("{stem}_a.cotr"),
        trace_b: format!("{stem}_b.cotr"),
    }
}

fn map_jobs<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// Simulates every acquisition of `scenario` and stores them in `dir`.
pub fn simulate_to_dir(scenario: &Scenario, dir: &Path, threads: usize) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let sim = Simulator::new(scenario)?;
    let jobs = jobs(scenario);
    let entries = map_jobs(jobs.len(), threads, |i| {
        let (t, cores) = &jobs[i];
        let acq = sim.acquire(*t, cores)?;
        let entry = entry_for(i, *t, cores);
        trace_io::save(dir.join(&entry.trace_a), &acq.rx_a)?;
        trace_io::save(dir.join(&entry.trace_b), &acq.rx_b)?;
        Ok(entry)
    })?;
    let manifest = Manifest {
        scenario: scenario.clone(),
        acquisitions: entries,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
        Error::Format(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))
    })?;
    manifest.scenario.validate()?;
    Ok(manifest)
}

/// Peak analysis of every acquisition stored in `dir`.
pub fn analyze_dir_groups(dir: &Path, threads: usize) -> Result<(Scenario, Vec<GroupResult>)> {
    let manifest = read_manifest(dir)?;
    let analyzer = Analyzer::new(&manifest.scenario)?;
    let results = map_jobs(manifest.acquisitions.len(), threads, |i| {
        let e = &manifest.acquisitions[i];
        let acq = Acquisition {
            temperature_c: e.temperature_c,
            cores: e.cores.clone(),
            rx_a: trace_io::load(dir.join(&e.trace_a))?,
            rx_b: trace_io::load(dir.join(&e.trace_b))?,
        };
        analyzer.analyze(&acq)
    })?;
    Ok((manifest.scenario, results))
}

/// Full report for the acquisitions stored in `dir`.
pub fn analyze_dir(dir: &Path, threads: usize) -> Result<MeasurementReport> {
    let (scenario, groups) = analyze_dir_groups(dir, threads)?;
    build_report(&scenario, groups)
}

/// C-OTDR peak analysis of every acquisition, without storing traces
/// unless `options.dump_dir` is set.
pub fn run_groups(scenario: &Scenario, options: &RunOptions) -> Result<Vec<GroupResult>> {
    let sim = Simulator::new(scenario)?;
    let analyzer = Analyzer::new(scenario)?;
    let jobs = jobs(scenario);
    if let Some(dir) = &options.dump_dir {
        fs::create_dir_all(dir)?;
    }
    let results = map_jobs(jobs.len(), options.threads, |i| {
        let (t, cores) = &jobs[i];
        let acq = sim.acquire(*t, cores)?;
        if let Some(dir) = &options.dump_dir {
            let entry = entry_for(i, *t, cores);
            trace_io::save(dir.join(&entry.trace_a), &acq.rx_a)?;
            trace_io::save(dir.join(&entry.trace_b), &acq.rx_b)?;
        }
        analyzer.analyze(&acq)
    })?;
    if let Some(dir) = &options.dump_dir {
        let manifest = Manifest {
            scenario: scenario.clone(),
            acquisitions: jobs
                .iter()
                .enumerate()
                .map(|(i, (t, c))| entry_for(i, *t, c))
                .collect(),
        };
        write_manifest(dir, &manifest)?;
    }
    Ok(results)
}

/// Simulates and analyzes the whole scenario.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<MeasurementReport> {
    let groups = run_groups(scenario, options)?;
    build_report(scenario, groups)
}

/// Skews of every core at one temperature. Each core is referred to the
/// center core of the acquisition it was measured in; cores measured more
/// than once keep their first measurement.
pub fn merge_groups(
    temperature_c: f64,
    groups: &[GroupResult],
    center_id: u32,
) -> Result<TemperatureResult> {
    let mut delays: BTreeMap<u32, DelayMeasurement> = BTreeMap::new();
    let mut skews: BTreeMap<u32, f64> = BTreeMap::new();
    let mut members = Vec::new();
    for g in groups.iter().filter(|g| g.temperature_c == temperature_c) {
        let group_skews = analysis::skew_vs_center(&g.delays, center_id)?;
        for d in &g.delays {
            if let Entry::Vacant(slot) = delays.entry(d.core_id) {
                slot.insert(*d);
                skews.insert(d.core_id, group_skews[&d.core_id]);
            }
        }
        members.push(g.clone());
    }
    if members.is_empty() {
        return Err(Error::param(format!("no acquisitions at {temperature_c} degC")));
    }
    Ok(TemperatureResult {
        temperature_c,
        groups: members,
        delays: delays.into_values().collect(),
        skews_s: skews,
    })
}

/// Birefringent segments simulating the PMD of `core_id`.
pub fn core_segments(scenario: &Scenario, core_id: u32) -> Result<Vec<BirefringentSegment>> {
    let core = scenario
        .fiber
        .core(core_id)
        .ok_or_else(|| Error::param(format!("unknown core {core_id}")))?;
    let m = core.birefringence_segments.max(1);
    let seed_value = seed::mix(&[scenario.setup.rng_seed, u64::from(core_id)]);
    Ok(mps::random_fiber(core.pmd_ps * 1e-12, m, seed_value))
}

/// MPS measurement products of one core at the reference temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsSpectra {
    pub core_id: u32,
    pub group_delay: Vec<(f64, f64)>,
    pub dispersion: Vec<(f64, f64)>,
    pub dgd: Vec<(f64, f64)>,
    pub pmd_s: f64,
}

fn dispersion_model(scenario: &Scenario, core_id: u32, temperature_c: f64) -> Result<DispersionModel> {
    let fiber = &scenario.fiber;
    let core = fiber
        .core(core_id)
        .ok_or_else(|| Error::param(format!("unknown core {core_id}")))?;
    Ok(DispersionModel {
        tau0_s: core_one_way_delay(core, fiber, temperature_c),
        lambda0_nm: scenario.mps.probe_wavelength_nm,
        d_ps_per_nm_km: scenario.mps.dispersion_ps_per_nm_km,
        s_ps_per_nm2_km: scenario.mps.dispersion_slope_ps_per_nm2_km,
        length_km: core.length_m / 1000.0,
    })
}

/// Group delay, dispersion and DGD spectra of one core. The cycle ambiguity
/// is resolved with the modeled delay.
pub fn mps_spectra(scenario: &Scenario, core_id: u32) -> Result<MpsSpectra> {
    let t = scenario.reference_temperature();
    let model = dispersion_model(scenario, core_id, t)?;
    let cfg = &scenario.mps;
    let phases = mps::simulate_mps_phase(&model, cfg)?;
    let group_delay: Vec<(f64, f64)> = mps::group_delay_from_phase(
        &phases,
        cfg.f_mod_hz,
        model.tau0_s,
        cfg.probe_wavelength_nm,
    )?
    .into_iter()
    .map(|(l, tau)| (l, tau + cfg.timebase_bias_s))
    .collect();
    let dispersion = if model.length_km > 0.0 {
        mps::chromatic_dispersion(&group_delay, model.length_km)?
    } else {
        Vec::new()
    };
    let dgd = mps::dgd_spectrum(&core_segments(scenario, core_id)?, &cfg.grid_nm(), None)?;
    let pmd_s = mps::pmd_from_dgd(&dgd)?;
    Ok(MpsSpectra {
        core_id,
        group_delay,
        dispersion,
        dgd,
        pmd_s,
    })
}

/// PMD of every core, estimated from its simulated DGD spectrum.
pub fn pmd_estimates(scenario: &Scenario) -> Result<BTreeMap<u32, f64>> {
    let grid = scenario.mps.grid_nm();
    scenario
        .fiber
        .core_ids()
        .into_iter()
        .map(|id| {
            let dgd = mps::dgd_spectrum(&core_segments(scenario, id)?, &grid, None)?;
            Ok((id, mps::pmd_from_dgd(&dgd)?))
        })
        .collect()
}

/// MPS delays at the probe wavelength, with the cycle ambiguity resolved by
/// the C-OTDR delays.
pub fn mps_delays(scenario: &Scenario, cotdr: &[DelayMeasurement]) -> Result<Vec<DelayMeasurement>> {
    cotdr
        .iter()
        .map(|d| {
            let model = dispersion_model(scenario, d.core_id, d.temperature_c)?;
            let mut cfg = scenario.mps.clone();
            cfg.coarse_delay_hint_s = d.one_way_s;
            mps::mps_core_delay(d.core_id, &model, &cfg, cfg.timebase_bias_s, d.temperature_c)
        })
        .collect()
}

/// Assembles the report from the per-acquisition results.
pub fn build_report(scenario: &Scenario, groups: Vec<GroupResult>) -> Result<MeasurementReport> {
    let center = scenario.fiber.center_core_id;
    let reference_t = scenario.reference_temperature();
    let temperatures = scenario
        .temperatures()
        .into_iter()
        .map(|t| merge_groups(t, &groups, center))
        .collect::<Result<Vec<_>>>()?;

    let mut tdc = BTreeMap::new();
    let mut excursions = BTreeMap::new();
    if temperatures.len() >= 2 {
        for id in scenario.fiber.core_ids() {
            let series: Vec<(f64, f64)> = temperatures
                .iter()
                .map(|r| {
                    let d = r.delays.iter().find(|d| d.core_id == id).expect("all cores measured");
                    (r.temperature_c, d.one_way_s)
                })
                .collect();
            tdc.insert(id, analysis::fit_tdc(&series, reference_t)?);
        }
        let series: Vec<(f64, BTreeMap<u32, f64>)> = temperatures
            .iter()
            .map(|r| (r.temperature_c, r.skews_s.clone()))
            .collect();
        excursions = analysis::skew_over_temperature(&series, reference_t, center)?;
    }

    let at_ref = temperatures
        .iter()
        .find(|r| r.temperature_c == reference_t)
        .expect("reference temperature is measured");
    let mps_delays = mps_delays(scenario, &at_ref.delays)?;
    let comparison = analysis::compare_methods(
        &at_ref.delays,
        &mps_delays,
        scenario.analysis.constant_offset_fraction,
    )?;
    let pmd_s = pmd_estimates(scenario)?;
    let table1 = Table1Row::new(scenario, &pmd_s, &at_ref.skews_s);

    Ok(MeasurementReport {
        scenario: scenario.name.clone(),
        seed: scenario.setup.rng_seed,
        center_core_id: center,
        reference_temperature_c: reference_t,
        temperatures,
        tdc,
        skew_excursions_s: excursions,
        pmd_s,
        mps_delays,
        method_comparison: comparison,
        table1,
    })
}
