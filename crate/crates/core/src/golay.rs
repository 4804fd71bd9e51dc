//! Binary Golay complementary pairs.
//!
//! A pair `(a, b)` of ±1 sequences is complementary when the sum of their
//! aperiodic autocorrelations vanishes at every non-zero lag:
//!
//! ```text
//! R_a(τ) + R_b(τ) = 2N·δ(τ)
//! ```
//!
//! Pairs of length `2^k` are built by recursive doubling from `([+1], [+1])`:
//! `a' = a ‖ b`, `b' = a ‖ −b`.
//!
//! ```
//! use cotdr_core::golay::{generate_golay, complementary_sum_check};
//!
//! let pair = generate_golay(11).unwrap();
//! assert_eq!(pair.len(), 2048);
//! let sum = complementary_sum_check(&pair);
//! assert_eq!(sum[0], 4096);
//! assert!(sum[1..].iter().all(|&v| v == 0));
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Largest supported order (length 16 Mi).
pub const MAX_ORDER: u32 = 24;

/// A complementary pair of bipolar sequences of length `2^order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GolayPair {
    a: Vec<i8>,
    b: Vec<i8>,
    order: u32,
}

impl GolayPair {
    /// Builds a pair from explicit sequences, checking length, alphabet and
    /// the complementary identity.
    pub fn from_sequences(a: Vec<i8>, b: Vec<i8>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || !a.len().is_power_of_two() {
            return Err(Error::param(format!(
                "sequences must have equal power-of-two length, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|&v| v != 1 && v != -1) {
            return Err(Error::param("sequence elements must be +1 or -1"));
        }
        let pair = GolayPair {
            order: a.len().trailing_zeros(),
            a,
            b,
        };
        let sum = complementary_sum_check(&pair);
        if sum[1..].iter().any(|&v| v != 0) {
            return Err(Error::param("sequences are not complementary"));
        }
        Ok(pair)
    }

    pub fn a(&self) -> &[i8] {
        &self.a
    }

    pub fn b(&self) -> &[i8] {
        &self.b
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Sequence length `N = 2^order`.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Both sequences in transmission order (`a` burst first, then `b`).
    pub fn sequences(&self) -> [&[i8]; 2] {
        [&self.a, &self.b]
    }

    /// Two lines of space-separated `1` / `-1` values.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 6);
        for seq in self.sequences() {
            for (i, v) in seq.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the two-line text form written by [`GolayPair::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut parse_line = |which: &str| -> Result<Vec<i8>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing sequence {which}")))?;
            line.split_whitespace()
                .map(|tok| {
                    tok.trim_start_matches('+')
                        .parse::<i8>()
                        .map_err(|e| Error::Format(format!("sequence {which}: {tok:?}: {e}")))
                })
                .collect()
        };
        let a = parse_line("a")?;
        let b = parse_line("b")?;
        if lines.next().is_some() {
            return Err(Error::Format("trailing data after two sequences".into()));
        }
        GolayPair::from_sequences(a, b).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Canonical pair of order `k` by recursive doubling from `([+1], [+1])`.
pub fn generate_golay(k: u32) -> Result<GolayPair> {
    if k > MAX_ORDER {
        return Err(Error::param(format!(
            "Golay order {k} out of range 0..={MAX_ORDER}"
        )));
    }
    let n = 1usize << k;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    a.push(1i8);
    b.push(1i8);
    for _ in 0..k {
        let len = a.len();
        // a' = a ‖ b, b' = a ‖ −b
        let mut next_b = a.clone();
        next_b.extend(b.iter().map(|&v| -v));
        a.extend_from_slice(&b);
        debug_assert_eq!(a.len(), 2 * len);
        b = next_b;
    }
    Ok(GolayPair { a, b, order: k })
}

/// Aperiodic autocorrelation `R(τ) = Σ s[i]·s[i+τ]` for `τ = 0..N-1`, exact.
pub fn autocorrelation(s: &[i8]) -> Result<Vec<i64>> {
    if s.is_empty() {
        return Err(Error::param("autocorrelation of an empty sequence"));
    }
    let n = s.len();
    Ok((0..n)
        .map(|lag| {
            s[..n - lag]
                .iter()
                .zip(&s[lag..])
                .map(|(&x, &y)| i64::from(x * y))
                .sum()
        })
        .collect())
}

/// `R_a(τ) + R_b(τ)` for every lag. Equals `2N` at lag 0 and zero elsewhere
/// for a valid pair.
pub fn complementary_sum_check(p: &GolayPair) -> Vec<i64> {
    let ra = autocorrelation(&p.a).expect("GolayPair is never empty");
    let rb = autocorrelation(&p.b).expect("GolayPair is never empty");
    ra.into_iter().zip(rb).map(|(x, y)| x + y).collect()
}
