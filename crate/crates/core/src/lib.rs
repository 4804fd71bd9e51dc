//! Simulation and analysis of correlation-OTDR and modulation-phase-shift
//! delay measurements on multi-core optical fibers.
//!
//! The measurement chain, in order:
//!
//! 1. [`golay`] builds a complementary pair of ±1 sequences.
//! 2. [`waveform`] turns each sequence into an NRZ intensity burst with a
//!    guard interval, and into a bipolar matched-filter reference.
//! 3. [`channel`] propagates the bursts through a 1×N splitter into the
//!    selected cores, reflects them at the cleaved ends and superimposes the
//!    returns with a reference reflection and averaged receiver noise.
//! 4. [`correlation`] matched-filters the receive traces and adds the two
//!    complementary correlations.
//! 5. [`peakfit`] locates the reflection peaks and refines them with a
//!    Gaussian fit below the sample period.
//! 6. [`analysis`] turns peak times into skews, temperature coefficients and
//!    method comparisons; [`mps`] provides the phase-shift reference method
//!    and the DGD/PMD model.
//!
//! [`scenario`] and [`pipeline`] tie these together for whole measurement
//! campaigns described in JSON.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analysis;
pub mod channel;
pub mod correlation;
mod error;
pub mod golay;
pub mod mps;
pub mod peakfit;
pub mod pipeline;
pub mod report;
pub mod scenario;
mod seed;
pub mod trace_io;
pub mod waveform;

pub use error::{Error, PipelineContext, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/golay.md")]
    mod golay {}
    #[doc = include_str!("../../../book/src/probe.md")]
    mod probe {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/correlation.md")]
    mod correlation {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/mps.md")]
    mod mps {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
