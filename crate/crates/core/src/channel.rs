//! Reflective multi-core fiber channel.
//!
//! The probe passes a 1×N splitter, travels down each selected core, reflects
//! off the cleaved far end and returns through the splitter. An air-gap
//! connector in front of the splitter contributes a reference reflection at
//! zero delay. All returns superimpose linearly on one photodiode, and the
//! oscilloscope averages many acquisitions.
//!
//! Delays that fall between samples are applied with a 32-tap Kaiser-windowed
//! sinc interpolator, so sub-sample ground truth survives the 20 ps grid.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::waveform::Trace;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Typical group index of silica fiber at 1550 nm.
pub const DEFAULT_GROUP_INDEX: f64 = 1.468;

/// Fresnel reflection of a cleaved glass/air interface.
pub const DEFAULT_END_REFLECTANCE: f64 = 0.04;

pub const FRACTIONAL_DELAY_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSpec {
    pub id: u32,
    pub length_m: f64,
    #[serde(default = "default_group_index")]
    pub group_index: f64,
    /// Signed one-way deviation from the nominal `n_g·L/c` delay.
    #[serde(default)]
    pub delay_offset_s: f64,
    #[serde(default = "default_reflectance")]
    pub end_reflectance: f64,
    #[serde(default = "default_loss")]
    pub loss_db_per_km: f64,
    /// Target mean DGD.
    #[serde(default)]
    pub pmd_ps: f64,
    #[serde(default = "default_segments")]
    pub birefringence_segments: usize,
}

fn default_group_index() -> f64 {
    DEFAULT_GROUP_INDEX
}
fn default_reflectance() -> f64 {
    DEFAULT_END_REFLECTANCE
}
fn default_loss() -> f64 {
    0.2
}
fn default_segments() -> usize {
    100
}

impl CoreSpec {
    /// A core with default optical parameters.
    pub fn new(id: u32, length_m: f64) -> Self {
        CoreSpec {
            id,
            length_m,
            group_index: DEFAULT_GROUP_INDEX,
            delay_offset_s: 0.0,
            end_reflectance: DEFAULT_END_REFLECTANCE,
            loss_db_per_km: default_loss(),
            pmd_ps: 0.0,
            birefringence_segments: default_segments(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("core {}: {what}", self.id)));
        // The zero-length limit is allowed for loopback tests.
        if !(self.length_m >= 0.0) || !self.length_m.is_finite() {
            return bad("length_m must be >= 0");
        }
        if !(self.group_index > 1.0) {
            return bad("group_index must be > 1");
        }
        if !(0.0..=1.0).contains(&self.end_reflectance) {
            return bad("end_reflectance must lie in [0, 1]");
        }
        if !(self.pmd_ps >= 0.0) {
            return bad("pmd_ps must be >= 0");
        }
        if !(self.loss_db_per_km >= 0.0) {
            return bad("loss_db_per_km must be >= 0");
        }
        if !self.delay_offset_s.is_finite() {
            return bad("delay_offset_s must be finite");
        }
        if self.birefringence_segments == 0 {
            return bad("birefringence_segments must be >= 1");
        }
        Ok(())
    }

    /// Delay at the reference temperature, before the temperature factor.
    pub fn base_delay_s(&self) -> f64 {
        self.group_index * self.length_m / SPEED_OF_LIGHT + self.delay_offset_s
    }

    /// Round-trip power scale of this core's end reflection seen through a
    /// `split_ways` coupler: `R · 10^(−2·α·L/10) / split²`.
    pub fn round_trip_scale(&self, split_ways: u32) -> f64 {
        let split = f64::from(split_ways);
        let loss_db = 2.0 * self.loss_db_per_km * self.length_m / 1000.0;
        self.end_reflectance * 10f64.powf(-loss_db / 10.0) / (split * split)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub cores: Vec<CoreSpec>,
    pub center_core_id: u32,
    pub tdc_ppm_per_k: f64,
    pub ref_temperature_c: f64,
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cores.is_empty() {
            return Err(Error::config("fiber has no cores"));
        }
        let mut seen = BTreeSet::new();
        for c in &self.cores {
            c.validate()?;
            if !seen.insert(c.id) {
                return Err(Error::config(format!("duplicate core id {}", c.id)));
            }
        }
        if !seen.contains(&self.center_core_id) {
            return Err(Error::config(format!(
                "center core {} is not among the cores",
                self.center_core_id
            )));
        }
        if !(0.0..=100.0).contains(&self.tdc_ppm_per_k) {
            return Err(Error::config("tdc_ppm_per_k must lie in [0, 100]"));
        }
        if !self.ref_temperature_c.is_finite() {
            return Err(Error::config("ref_temperature_c must be finite"));
        }
        Ok(())
    }

    pub fn core(&self, id: u32) -> Option<&CoreSpec> {
        self.cores.iter().find(|c| c.id == id)
    }

    pub fn center(&self) -> &CoreSpec {
        self.core(self.center_core_id)
            .expect("validated fiber contains its center core")
    }

    pub fn core_ids(&self) -> Vec<u32> {
        self.cores.iter().map(|c| c.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSetup {
    #[serde(default = "default_split")]
    pub split_ways: u32,
    #[serde(default = "default_reference_amplitude")]
    pub reference_reflection_amplitude: f64,
    /// Noise standard deviation of one acquisition, in units of probe power.
    pub noise_sigma: f64,
    #[serde(default = "default_averages")]
    pub n_averages: u32,
    #[serde(default)]
    pub timebase_error_ppb: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Samples recorded before the reference reflection arrives.
    #[serde(default = "default_pretrigger")]
    pub pretrigger_samples: usize,
    /// Draw `n_averages` independent noisy acquisitions and average them
    /// instead of scaling the noise analytically.
    #[serde(default)]
    pub explicit_averaging: bool,
    /// Add the PMD-driven per-temperature delay wander to every core.
    #[serde(default)]
    pub pmd_wander: bool,
}

fn default_split() -> u32 {
    4
}
fn default_reference_amplitude() -> f64 {
    0.02
}
fn default_averages() -> u32 {
    4000
}
fn default_pretrigger() -> usize {
    64
}

impl Default for MeasurementSetup {
    fn default() -> Self {
        MeasurementSetup {
            split_ways: default_split(),
            reference_reflection_amplitude: default_reference_amplitude(),
            noise_sigma: 0.0,
            n_averages: default_averages(),
            timebase_error_ppb: 0.0,
            rng_seed: 0,
            pretrigger_samples: default_pretrigger(),
            explicit_averaging: false,
            pmd_wander: false,
        }
    }
}

impl MeasurementSetup {
    pub fn validate(&self) -> Result<()> {
        if self.split_ways < 1 {
            return Err(Error::config("split_ways must be >= 1"));
        }
        if self.n_averages < 1 {
            return Err(Error::config("n_averages must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::config("noise_sigma must be finite and >= 0"));
        }
        if !(self.reference_reflection_amplitude >= 0.0) {
            return Err(Error::config("reference_reflection_amplitude must be >= 0"));
        }
        if !self.timebase_error_ppb.is_finite() {
            return Err(Error::config("timebase_error_ppb must be finite"));
        }
        Ok(())
    }

    /// Noise standard deviation left after averaging.
    pub fn averaged_noise_sigma(&self) -> f64 {
        self.noise_sigma / f64::from(self.n_averages).sqrt()
    }

    /// Factor applied to true delays by the receiver timebase.
    pub fn timebase_scale(&self) -> f64 {
        1.0 + self.timebase_error_ppb * 1e-9
    }
}

/// One-way group delay of `core` at temperature `t_c`:
/// `(n_g·L/c + offset) · (1 + TDC·10⁻⁶·(T − T_ref))`.
pub fn core_one_way_delay(core: &CoreSpec, fiber: &FiberSpec, t_c: f64) -> f64 {
    let factor = 1.0 + fiber.tdc_ppm_per_k * 1e-6 * (t_c - fiber.ref_temperature_c);
    core.base_delay_s() * factor
}

/// PMD-driven round-trip delay wander of `core` at `t_c`.
///
/// Zero-mean Gaussian with standard deviation `pmd_ps`, drawn independently
/// per (core, temperature, seed) and reproducible for identical arguments.
pub fn temperature_skew_perturbation(core: &CoreSpec, t_c: f64, seed: u64) -> f64 {
    if core.pmd_ps == 0.0 {
        return 0.0;
    }
    let mut rng = seed::rng(&[
        0x706d_645f_7761_6e64, // "pmd_wand"
        u64::from(core.id),
        seed::temperature_word(t_c),
        seed,
    ]);
    let z: f64 = rng.sample(StandardNormal);
    z * core.pmd_ps * 1e-12
}

/// Windowed-sinc taps that delay a signal by `frac ∈ [0, 1)` samples.
/// Tap `j` applies to input offset `m = j − 15`.
fn fractional_delay_taps(frac: f64) -> [f64; FRACTIONAL_DELAY_TAPS] {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as f64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut taps = [0.0; FRACTIONAL_DELAY_TAPS];
    for (j, tap) in taps.iter_mut().enumerate() {
        let x = j as f64 - (half - 1.0) - frac;
        let r = x / half;
        let window = if r.abs() >= 1.0 {
            0.0
        } else {
            bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
        };
        *tap = sinc(x) * window;
    }
    taps
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Adds `scale · (x − low)` delayed by `delay_samples` into `out`.
fn add_delayed(out: &mut [f64], x: &[f64], low: f64, scale: f64, delay_samples: f64) {
    let n0 = delay_samples.floor();
    let frac = delay_samples - n0;
    let n0 = n0 as isize;
    let len = out.len() as isize;
    if frac == 0.0 {
        for (k, &v) in x.iter().enumerate() {
            let n = k as isize + n0;
            if (0..len).contains(&n) {
                out[n as usize] += scale * (v - low);
            }
        }
        return;
    }
    let taps = fractional_delay_taps(frac);
    let first = -((FRACTIONAL_DELAY_TAPS / 2) as isize - 1);
    for (k, &v) in x.iter().enumerate() {
        let ac = v - low;
        if ac == 0.0 {
            continue;
        }
        let base = k as isize + n0 + first;
        for (j, &h) in taps.iter().enumerate() {
            let n = base + j as isize;
            if (0..len).contains(&n) {
                out[n as usize] += scale * h * ac;
            }
        }
    }
}

/// One reflection path: amplitude scale and true round-trip delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub scale: f64,
    pub round_trip_s: f64,
}

/// Reflection paths seen by the receiver, reference reflection first.
pub fn reflection_paths(
    fiber: &FiberSpec,
    setup: &MeasurementSetup,
    selected_cores: &[u32],
    t_c: f64,
) -> Result<Vec<Path>> {
    fiber.validate()?;
    setup.validate()?;
    if selected_cores.is_empty() || selected_cores.len() > setup.split_ways as usize {
        return Err(Error::param(format!(
            "{} cores selected for a 1x{} splitter",
            selected_cores.len(),
            setup.split_ways
        )));
    }
    let mut unique = BTreeSet::new();
    let mut paths = vec![Path {
        scale: setup.reference_reflection_amplitude,
        round_trip_s: 0.0,
    }];
    for &id in selected_cores {
        if !unique.insert(id) {
            return Err(Error::param(format!("core {id} selected twice")));
        }
        let core = fiber
            .core(id)
            .ok_or_else(|| Error::param(format!("unknown core {id}")))?;
        let mut round_trip = 2.0 * core_one_way_delay(core, fiber, t_c);
        if setup.pmd_wander {
            round_trip += temperature_skew_perturbation(core, t_c, setup.rng_seed);
        }
        paths.push(Path {
            scale: core.round_trip_scale(setup.split_ways),
            round_trip_s: round_trip,
        });
    }
    Ok(paths)
}

/// Averaged receive traces for the `a` and `b` probe bursts.
///
/// The returned traces start `pretrigger_samples` before the reference
/// reflection (`t0 < 0`) and share the probes' sample period.
pub fn simulate_receive_trace(
    probe_a: &Trace,
    probe_b: &Trace,
    fiber: &FiberSpec,
    setup: &MeasurementSetup,
    selected_cores: &[u32],
    t_c: f64,
) -> Result<(Trace, Trace)> {
    let paths = reflection_paths(fiber, setup, selected_cores, t_c)?;
    let mut seed_words = vec![
        setup.rng_seed,
        seed::temperature_word(t_c),
        selected_cores.len() as u64,
    ];
    seed_words.extend(selected_cores.iter().map(|&c| u64::from(c)));
    let a = render(probe_a, &paths, setup, &seed_words, 0)?;
    let b = render(probe_b, &paths, setup, &seed_words, 1)?;
    Ok((a, b))
}

/// Noise-free receive trace for one probe and an explicit set of paths.
pub fn render_paths(probe: &Trace, paths: &[Path], setup: &MeasurementSetup) -> Result<Trace> {
    if probe.t0 != 0.0 {
        return Err(Error::param("probe traces must start at t0 = 0"));
    }
    let dt = probe.dt;
    let low = probe.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let low = if low.is_finite() { low } else { 0.0 };
    // Extent of the burst (last sample above the guard level).
    let burst_end = probe
        .samples
        .iter()
        .rposition(|&v| v != low)
        .map_or(0, |i| i + 1);
    let pre = setup.pretrigger_samples;
    let len = pre + probe.len();
    let tail = FRACTIONAL_DELAY_TAPS / 2;
    let mut out = vec![0.0; len];
    let pedestal: f64 = paths.iter().map(|p| p.scale * low).sum();
    let timebase = setup.timebase_scale();
    for path in paths {
        let delay_samples = pre as f64 + path.round_trip_s * timebase / dt;
        if delay_samples < 0.0 {
            return Err(Error::config("negative path delay"));
        }
        let needed = delay_samples.ceil() as usize + burst_end + tail;
        if needed > len {
            return Err(Error::config(format!(
                "receive window of {:.3} us is shorter than round trip {:.3} us plus burst; \
                 increase the probe guard interval",
                (len - pre) as f64 * dt * 1e6,
                path.round_trip_s * 1e6
            )));
        }
        add_delayed(&mut out, &probe.samples, low, path.scale, delay_samples);
    }
    if pedestal != 0.0 {
        for v in &mut out {
            *v += pedestal;
        }
    }
    Trace::new(-(pre as f64) * dt, dt, out)
}

fn render(
    probe: &Trace,
    paths: &[Path],
    setup: &MeasurementSetup,
    seed_words: &[u64],
    burst: u64,
) -> Result<Trace> {
    let mut trace = render_paths(probe, paths, setup)?;
    add_noise(&mut trace, setup, seed_words, burst);
    Ok(trace)
}

fn add_noise(trace: &mut Trace, setup: &MeasurementSetup, seed_words: &[u64], burst: u64) {
    if setup.noise_sigma == 0.0 {
        return;
    }
    let mut words = seed_words.to_vec();
    words.push(burst);
    let mut rng = seed::rng(&words);
    if setup.explicit_averaging {
        let m = setup.n_averages as usize;
        let mut acc = vec![0.0; trace.len()];
        for _ in 0..m {
            for a in &mut acc {
                let z: f64 = rng.sample(StandardNormal);
                *a += z;
            }
        }
        let k = setup.noise_sigma / m as f64;
        for (v, a) in trace.samples.iter_mut().zip(acc) {
            *v += a * k;
        }
    } else {
        let sigma = setup.averaged_noise_sigma();
        for v in &mut trace.samples {
            let z: f64 = rng.sample(StandardNormal);
            *v += z * sigma;
        }
    }
}
