//! Probe bursts and sampled traces.
//!
//! Each Golay sequence is sent as an NRZ intensity burst: `+1` maps to the
//! high power level, `−1` to the low level, and every bit is held for
//! `sample_rate / bit_rate` samples. A guard interval of constant low level
//! follows each burst so that all reflections return before the next one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::golay::GolayPair;

/// Timing and level configuration of the probe generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub bit_rate_hz: f64,
    pub sample_rate_hz: f64,
    pub guard_duration_s: f64,
    #[serde(default = "default_high")]
    pub high_level: f64,
    #[serde(default)]
    pub low_level: f64,
}

fn default_high() -> f64 {
    1.0
}

impl Default for ProbeConfig {
    /// 10 Gbit/s bursts sampled at 50 GS/s, no guard.
    fn default() -> Self {
        ProbeConfig {
            bit_rate_hz: 10e9,
            sample_rate_hz: 50e9,
            guard_duration_s: 0.0,
            high_level: 1.0,
            low_level: 0.0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bit_rate_hz > 0.0 && self.sample_rate_hz > 0.0) {
            return Err(Error::param("bit and sample rates must be positive"));
        }
        if !(self.guard_duration_s >= 0.0) || !self.guard_duration_s.is_finite() {
            return Err(Error::param("guard duration must be finite and >= 0"));
        }
        if !(self.high_level > self.low_level && self.low_level >= 0.0) {
            return Err(Error::param("levels must satisfy high > low >= 0"));
        }
        self.samples_per_bit().map(|_| ())
    }

    /// Integer number of samples per bit.
    pub fn samples_per_bit(&self) -> Result<usize> {
        let ratio = self.sample_rate_hz / self.bit_rate_hz;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
            return Err(Error::param(format!(
                "sample rate {} Hz is not an integer multiple of bit rate {} Hz",
                self.sample_rate_hz, self.bit_rate_hz
            )));
        }
        Ok(rounded as usize)
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Duration of one burst of `n_bits` bits.
    pub fn burst_duration_s(&self, n_bits: usize) -> f64 {
        n_bits as f64 / self.bit_rate_hz
    }

    pub fn guard_samples(&self) -> usize {
        (self.guard_duration_s * self.sample_rate_hz).round() as usize
    }
}

/// Smallest guard interval that keeps every reflection of one burst clear of
/// the next: `2 · 1.25 · longest_one_way + burst`.
pub fn recommended_guard_s(longest_one_way_delay_s: f64, burst_duration_s: f64) -> f64 {
    2.0 * longest_one_way_delay_s * 1.25 + burst_duration_s
}

/// A uniformly sampled real waveform. Sample `i` is taken at `t0 + i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::param(format!("invalid time axis t0={t0}, dt={dt}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("sample {i} is not finite")));
        }
        Ok(Trace { t0, dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: f64) -> f64 {
        self.t0 + i * self.dt
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }

    /// Rounds every sample to single precision, the resolution of the stored
    /// trace format.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.samples {
            *v = f64::from(*v as f32);
        }
    }
}

fn hold(seq: &[i8], spb: usize, mut level: impl FnMut(i8) -> f64, extra: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.len() * spb + extra);
    for &bit in seq {
        let v = level(bit);
        out.extend(std::iter::repeat_n(v, spb));
    }
    out
}

/// Unipolar probe bursts for both sequences, each followed by the guard.
pub fn build_probe(p: &GolayPair, cfg: &ProbeConfig) -> Result<(Trace, Trace)> {
    cfg.validate()?;
    let spb = cfg.samples_per_bit()?;
    let guard = cfg.guard_samples();
    let dt = cfg.sample_period_s();
    let [a, b] = p.sequences().map(|seq| {
        let mut s = hold(
            seq,
            spb,
            |bit| if bit > 0 { cfg.high_level } else { cfg.low_level },
            guard,
        );
        s.resize(s.len() + guard, cfg.low_level);
        Trace {
            t0: 0.0,
            dt,
            samples: s,
        }
    });
    Ok((a, b))
}

/// Sample-rate matched ±1 matched-filter references (no guard).
pub fn bipolar_reference(p: &GolayPair, cfg: &ProbeConfig) -> Result<(Trace, Trace)> {
    cfg.validate()?;
    let spb = cfg.samples_per_bit()?;
    let dt = cfg.sample_period_s();
    let [a, b] = p.sequences().map(|seq| Trace {
        t0: 0.0,
        dt,
        samples: hold(seq, spb, f64::from, 0),
    });
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golay::generate_golay;

    fn cfg(spb: f64, guard_s: f64) -> ProbeConfig {
        ProbeConfig {
            bit_rate_hz: 10e9,
            sample_rate_hz: 10e9 * spb,
            guard_duration_s: guard_s,
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn paper_frame_numbers() {
        let c = ProbeConfig::default();
        assert_eq!(c.samples_per_bit().unwrap(), 5);
        let burst = c.burst_duration_s(2048);
        assert!((burst - 204.8e-9).abs() < 1e-18);
    }

    #[test]
    fn single_bit_probe() {
        let p = generate_golay(0).unwrap();
        let (a, b) = build_probe(&p, &cfg(1.0, 0.0)).unwrap();
        assert_eq!(a.samples, vec![1.0]);
        assert_eq!(b.samples, vec![1.0]);
    }

    #[test]
    fn references_are_sample_and_hold() {
        let p = generate_golay(1).unwrap();
        let (a, _) = bipolar_reference(&p, &cfg(1.0, 0.0)).unwrap();
        assert_eq!(a.samples, vec![1.0, 1.0]);
        let (_, b) = bipolar_reference(&p, &cfg(2.0, 0.0)).unwrap();
        assert_eq!(b.samples, vec![1.0, 1.0, -1.0, -1.0]);
        let p = generate_golay(11).unwrap();
        let (a, _) = bipolar_reference(&p, &ProbeConfig::default()).unwrap();
        assert_eq!(a.len(), 10240);
    }

    #[test]
    fn rejects_fractional_samples_per_bit() {
        let p = generate_golay(2).unwrap();
        let c = ProbeConfig {
            sample_rate_hz: 25e9,
            ..ProbeConfig::default()
        };
        assert!(matches!(build_probe(&p, &c), Err(Error::Parameter(_))));
        assert!(bipolar_reference(&p, &c).is_err());
    }

    #[test]
    fn rejects_bad_levels() {
        let p = generate_golay(2).unwrap();
        let c = ProbeConfig {
            high_level: 0.2,
            low_level: 0.5,
            ..ProbeConfig::default()
        };
        assert!(build_probe(&p, &c).is_err());
    }

    #[test]
    fn guard_and_levels() {
        let p = generate_golay(3).unwrap();
        let c = ProbeConfig {
            guard_duration_s: 1e-9,
            high_level: 0.9,
            low_level: 0.1,
            ..ProbeConfig::default()
        };
        let (a, _) = build_probe(&p, &c).unwrap();
        assert_eq!(a.len(), 8 * 5 + 50);
        assert!(a.samples[40..].iter().all(|&v| v == 0.1));
        assert_eq!(a.samples[0], 0.9);
    }

    #[test]
    fn recommended_guard() {
        let g = recommended_guard_s(10e-6, 204.8e-9);
        assert!((g - (25e-6 + 204.8e-9)).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn bit_center_round_trip(k in 0u32..9, spb in 1usize..8, guard_ns in 0.0f64..5.0,
                                 low in 0.0f64..0.4, span in 0.1f64..2.0) {
            let p = generate_golay(k).unwrap();
            let c = ProbeConfig {
                bit_rate_hz: 10e9,
                sample_rate_hz: 10e9 * spb as f64,
                guard_duration_s: guard_ns * 1e-9,
                high_level: low + span,
                low_level: low,
            };
            let (ta, tb) = build_probe(&p, &c).unwrap();
            let threshold = (c.high_level + c.low_level) / 2.0;
            for (trace, seq) in [(&ta, p.a()), (&tb, p.b())] {
                proptest::prop_assert_eq!(trace.len(), seq.len() * spb + c.guard_samples());
                let recovered: Vec<i8> = (0..seq.len())
                    .map(|i| if trace.samples[i * spb + spb / 2] > threshold { 1 } else { -1 })
                    .collect();
                proptest::prop_assert_eq!(&recovered[..], seq);
            }
        }
    }

    #[test]
    fn trace_rejects_non_finite() {
        assert!(Trace::new(0.0, 1.0, vec![f64::NAN]).is_err());
        assert!(Trace::new(0.0, 0.0, vec![]).is_err());
    }
}
