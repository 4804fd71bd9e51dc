//! Modulation phase shift (MPS) method.
//!
//! An intensity-modulated probe at `f_mod` acquires an RF phase
//! `φ(λ) = 2π·f_mod·τ(λ)` through the fiber. Sweeping the wavelength and
//! unwrapping the phase yields the group delay curve, its derivative gives
//! the chromatic dispersion. Polarization effects are modeled by a chain of
//! linear retarders whose differential group delay (DGD) is extracted from
//! the eigenvalues of `U(ω+δω/2)·U(ω−δω/2)⁻¹`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{DelayMeasurement, DelayMethod};
use crate::channel::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::seed;

/// Largest accepted phase step between adjacent wavelengths.
pub const MAX_PHASE_STEP_RAD: f64 = PI / 2.0;

/// Largest accepted eigenvalue phase difference in the DGD estimator.
pub const MAX_EIGEN_PHASE_RAD: f64 = 0.9 * PI;

/// Mean of a Maxwellian relative to its RMS value, `√(8/(3π))`.
pub fn maxwellian_mean_factor() -> f64 {
    (8.0 / (3.0 * PI)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpsConfig {
    #[serde(default = "default_f_mod")]
    pub f_mod_hz: f64,
    #[serde(default = "default_start")]
    pub lambda_start_nm: f64,
    #[serde(default = "default_stop")]
    pub lambda_stop_nm: f64,
    #[serde(default = "default_resolution")]
    pub resolution_nm: f64,
    /// Coarse group delay used to fix the integer number of RF cycles.
    #[serde(default)]
    pub coarse_delay_hint_s: f64,
    /// Wavelength at which core delays are reported.
    #[serde(default = "default_probe_wavelength")]
    pub probe_wavelength_nm: f64,
    /// Unsynchronized timebase offset of the MPS instrument.
    #[serde(default)]
    pub timebase_bias_s: f64,
    #[serde(default = "default_d")]
    pub dispersion_ps_per_nm_km: f64,
    #[serde(default = "default_s")]
    pub dispersion_slope_ps_per_nm2_km: f64,
}

fn default_f_mod() -> f64 {
    2e9
}
fn default_start() -> f64 {
    1495.0
}
fn default_stop() -> f64 {
    1605.0
}
fn default_resolution() -> f64 {
    0.05
}
fn default_probe_wavelength() -> f64 {
    1550.0
}
fn default_d() -> f64 {
    17.0
}
fn default_s() -> f64 {
    0.058
}

impl Default for MpsConfig {
    /// 110 nm sweep at 0.05 nm centered on 1550 nm, 2 GHz modulation.
    fn default() -> Self {
        MpsConfig {
            f_mod_hz: default_f_mod(),
            lambda_start_nm: default_start(),
            lambda_stop_nm: default_stop(),
            resolution_nm: default_resolution(),
            coarse_delay_hint_s: 0.0,
            probe_wavelength_nm: default_probe_wavelength(),
            timebase_bias_s: 0.0,
            dispersion_ps_per_nm_km: default_d(),
            dispersion_slope_ps_per_nm2_km: default_s(),
        }
    }
}

impl MpsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_stop_nm > self.lambda_start_nm) {
            return Err(Error::config("lambda_stop_nm must exceed lambda_start_nm"));
        }
        if !(self.resolution_nm > 0.0) {
            return Err(Error::config("resolution_nm must be > 0"));
        }
        if !(self.f_mod_hz > 0.0) {
            return Err(Error::config("f_mod_hz must be > 0"));
        }
        Ok(())
    }

    /// Sweep wavelengths, inclusive of both ends.
    pub fn grid_nm(&self) -> Vec<f64> {
        let steps = ((self.lambda_stop_nm - self.lambda_start_nm) / self.resolution_nm).round() as usize;
        (0..=steps)
            .map(|i| self.lambda_start_nm + i as f64 * self.resolution_nm)
            .collect()
    }
}

/// Group delay `τ(λ) = τ₀ + D·L·(λ−λ₀) + (S/2)·L·(λ−λ₀)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    pub tau0_s: f64,
    pub lambda0_nm: f64,
    pub d_ps_per_nm_km: f64,
    pub s_ps_per_nm2_km: f64,
    pub length_km: f64,
}

impl DispersionModel {
    pub fn group_delay_s(&self, lambda_nm: f64) -> f64 {
        let dl = lambda_nm - self.lambda0_nm;
        self.tau0_s
            + (self.d_ps_per_nm_km * dl + 0.5 * self.s_ps_per_nm2_km * dl * dl) * self.length_km * 1e-12
    }
}

fn wrap_phase(cycles: f64) -> f64 {
    // (−π, π]
    let frac = cycles - cycles.round();
    let frac = if frac <= -0.5 { frac + 1.0 } else { frac };
    2.0 * PI * frac
}

/// Wrapped RF phase `2π·f_mod·τ(λ)` over the sweep grid.
pub fn simulate_mps_phase(model: &DispersionModel, cfg: &MpsConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if !(model.length_km >= 0.0) {
        return Err(Error::param("length_km must be >= 0"));
    }
    Ok(cfg
        .grid_nm()
        .into_iter()
        .map(|l| (l, wrap_phase(cfg.f_mod_hz * model.group_delay_s(l))))
        .collect())
}

/// Unwraps the phase along wavelength and converts it to group delay.
///
/// The integer-cycle ambiguity is fixed at the grid point nearest
/// `anchor_nm`, where the delay is taken to be the one closest to
/// `coarse_delay_hint_s`. A hint that is off by a whole modulation period
/// shifts the whole curve by `1/f_mod`.
pub fn group_delay_from_phase(
    phases: &[(f64, f64)],
    f_mod_hz: f64,
    coarse_delay_hint_s: f64,
    anchor_nm: f64,
) -> Result<Vec<(f64, f64)>> {
    if phases.is_empty() {
        return Err(Error::param("empty phase list"));
    }
    if !(f_mod_hz > 0.0) {
        return Err(Error::param("f_mod_hz must be > 0"));
    }
    if phases.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::param("wavelength grid must be strictly increasing"));
    }
    // Unwrapped phase in cycles relative to the first point.
    let mut cycles = Vec::with_capacity(phases.len());
    let mut acc = phases[0].1 / (2.0 * PI);
    cycles.push(acc);
    for w in phases.windows(2) {
        let step = wrap_phase((w[1].1 - w[0].1) / (2.0 * PI));
        if step.abs() > MAX_PHASE_STEP_RAD {
            return Err(Error::Unwrap(format!(
                "phase step of {step:.3} rad between {} and {} nm; grid too coarse",
                w[0].0, w[1].0
            )));
        }
        acc += step / (2.0 * PI);
        cycles.push(acc);
    }
    let anchor = phases
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .0 - anchor_nm).abs().total_cmp(&(b.1 .0 - anchor_nm).abs()))
        .map(|(i, _)| i)
        .expect("non-empty");
    let whole = (f_mod_hz * coarse_delay_hint_s - cycles[anchor]).round();
    Ok(phases
        .iter()
        .zip(cycles)
        .map(|(&(l, _), c)| (l, (whole + c) / f_mod_hz))
        .collect())
}

/// Central-difference dispersion in ps/(nm·km) at the interior grid points.
pub fn chromatic_dispersion(taus: &[(f64, f64)], length_km: f64) -> Result<Vec<(f64, f64)>> {
    if taus.len() < 3 {
        return Err(Error::param("dispersion needs at least 3 points"));
    }
    if !(length_km > 0.0) {
        return Err(Error::param("length_km must be > 0"));
    }
    Ok(taus
        .windows(3)
        .map(|w| {
            let slope = (w[2].1 - w[0].1) / (w[2].0 - w[0].0);
            (w[1].0, slope * 1e12 / length_km)
        })
        .collect())
}

/// Linear retarder: differential delay `dgd_s` between the axes at
/// `axis_angle_rad` and its orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirefringentSegment {
    pub dgd_s: f64,
    pub axis_angle_rad: f64,
}

/// Row-major 2×2 complex matrix.
pub type Jones = [Complex64; 4];

fn jones_mul(a: &Jones, b: &Jones) -> Jones {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// `A · Bᴴ`
fn jones_mul_adjoint(a: &Jones, b: &Jones) -> Jones {
    [
        a[0] * b[0].conj() + a[1] * b[1].conj(),
        a[0] * b[2].conj() + a[1] * b[3].conj(),
        a[2] * b[0].conj() + a[3] * b[1].conj(),
        a[2] * b[2].conj() + a[3] * b[3].conj(),
    ]
}

impl BirefringentSegment {
    /// Transfer matrix `R(θ)·diag(e^{−iωτ/2}, e^{iωτ/2})·R(−θ)`.
    pub fn jones(&self, omega: f64) -> Jones {
        let (s, c) = self.axis_angle_rad.sin_cos();
        let half = omega * self.dgd_s / 2.0;
        let e_fast = Complex64::from_polar(1.0, -half);
        let e_slow = Complex64::from_polar(1.0, half);
        [
            e_fast * c * c + e_slow * s * s,
            (e_fast - e_slow) * c * s,
            (e_fast - e_slow) * c * s,
            e_fast * s * s + e_slow * c * c,
        ]
    }
}

/// Product of the segment matrices in propagation order.
pub fn chain_jones(segments: &[BirefringentSegment], omega: f64) -> Jones {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    segments
        .iter()
        .fold([one, zero, zero, one], |acc, s| jones_mul(&s.jones(omega), &acc))
}

fn eigenvalues(m: &Jones) -> (Complex64, Complex64) {
    let half_tr = (m[0] + m[3]) / 2.0;
    let det = m[0] * m[3] - m[1] * m[2];
    let disc = (half_tr * half_tr - det).sqrt();
    (half_tr + disc, half_tr - disc)
}

/// Angular optical frequency of a vacuum wavelength.
pub fn omega_of_nm(lambda_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (lambda_nm * 1e-9)
}

/// DGD at one angular frequency from a two-point eigenanalysis.
pub fn dgd_at(segments: &[BirefringentSegment], omega: f64, delta_omega: f64) -> Result<f64> {
    let hi = chain_jones(segments, omega + delta_omega / 2.0);
    let lo = chain_jones(segments, omega - delta_omega / 2.0);
    let (r1, r2) = eigenvalues(&jones_mul_adjoint(&hi, &lo));
    let phase = (r1 / r2).arg().abs();
    if phase > MAX_EIGEN_PHASE_RAD {
        return Err(Error::Step(format!(
            "eigenvalue phase {phase:.3} rad near the wrap point; reduce delta_omega ({delta_omega:e} rad/s)"
        )));
    }
    Ok(phase / delta_omega)
}

/// DGD over a wavelength grid.
///
/// `delta_omega` defaults to the angular-frequency step of the grid at its
/// center.
pub fn dgd_spectrum(
    segments: &[BirefringentSegment],
    lambdas_nm: &[f64],
    delta_omega: Option<f64>,
) -> Result<Vec<(f64, f64)>> {
    if segments.is_empty() {
        return Err(Error::param("at least one segment is required"));
    }
    if segments.iter().any(|s| !(s.dgd_s >= 0.0)) {
        return Err(Error::param("segment dgd_s must be >= 0"));
    }
    let step = match delta_omega {
        Some(d) if d > 0.0 => d,
        Some(_) => return Err(Error::param("delta_omega must be > 0")),
        None => {
            if lambdas_nm.len() < 2 {
                return Err(Error::param("delta_omega is required for a single wavelength"));
            }
            let span = lambdas_nm[lambdas_nm.len() - 1] - lambdas_nm[0];
            let res = span.abs() / (lambdas_nm.len() - 1) as f64;
            let mid = 0.5 * (lambdas_nm[0] + lambdas_nm[lambdas_nm.len() - 1]);
            2.0 * PI * SPEED_OF_LIGHT * res * 1e-9 / (mid * 1e-9).powi(2)
        }
    };
    lambdas_nm
        .iter()
        .map(|&l| Ok((l, dgd_at(segments, omega_of_nm(l), step)?)))
        .collect()
}

/// PMD as the mean DGD over the grid.
pub fn pmd_from_dgd(dgd: &[(f64, f64)]) -> Result<f64> {
    if dgd.is_empty() {
        return Err(Error::param("empty DGD spectrum"));
    }
    Ok(dgd.iter().map(|p| p.1).sum::<f64>() / dgd.len() as f64)
}

/// Random fiber of `m` equal-DGD segments with uniform random axes, scaled so
/// that the ensemble mean DGD is `target_pmd_s`.
pub fn random_fiber(target_pmd_s: f64, m: usize, seed_value: u64) -> Vec<BirefringentSegment> {
    let per_segment = target_pmd_s / ((m as f64).sqrt() * maxwellian_mean_factor());
    let mut rng = seed::rng(&[0x7365_676d_656e_7473, seed_value, m as u64]);
    (0..m)
        .map(|_| BirefringentSegment {
            dgd_s: per_segment,
            axis_angle_rad: rng.gen_range(0.0..PI),
        })
        .collect()
}

/// Core delay as reported by the MPS instrument at the probe wavelength.
pub fn mps_core_delay(
    core_id: u32,
    model: &DispersionModel,
    cfg: &MpsConfig,
    timebase_bias_s: f64,
    temperature_c: f64,
) -> Result<DelayMeasurement> {
    let phases = simulate_mps_phase(model, cfg)?;
    let taus = group_delay_from_phase(&phases, cfg.f_mod_hz, cfg.coarse_delay_hint_s, cfg.probe_wavelength_nm)?;
    let tau = interpolate(&taus, cfg.probe_wavelength_nm)?;
    Ok(DelayMeasurement::from_one_way(
        core_id,
        tau + timebase_bias_s,
        temperature_c,
        DelayMethod::Mps,
    ))
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> Result<f64> {
    let first = curve.first().ok_or_else(|| Error::param("empty curve"))?;
    let last = curve[curve.len() - 1];
    if x < first.0 || x > last.0 {
        return Err(Error::param(format!(
            "probe wavelength {x} nm outside sweep {}..{} nm",
            first.0, last.0
        )));
    }
    let i = curve.partition_point(|p| p.0 < x);
    if i < curve.len() && curve[i].0 == x {
        return Ok(curve[i].1);
    }
    let (a, b) = (curve[i - 1], curve[i]);
    Ok(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

/// Two-column CSV `lambda_nm,<column>`.
pub fn write_spectrum_csv<W: Write>(mut w: W, column: &str, data: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "lambda_nm,{column}")?;
    for (l, v) in data {
        writeln!(w, "{l:.4},{v:e}")?;
    }
    Ok(())
}
