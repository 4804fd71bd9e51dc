//! The `COTR` binary trace format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "COTR"
//! 4       2     format version, u16 LE (currently 1)
//! 6       8     t0 in seconds, f64 LE
//! 14      8     dt in seconds, f64 LE
//! 22      8     sample count, u64 LE
//! 30      4·n   samples, f32 LE
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::waveform::Trace;

pub const MAGIC: &[u8; 4] = b"COTR";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 30;

pub fn write_trace<W: Write>(mut w: W, trace: &Trace) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&trace.t0.to_le_bytes())?;
    w.write_all(&trace.dt.to_le_bytes())?;
    w.write_all(&(trace.samples.len() as u64).to_le_bytes())?;
    for &v in &trace.samples {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<Trace> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated COTR header: {e}")))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"COTR\"",
            &header[0..4]
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported COTR version {version}")));
    }
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let t0 = f64_at(6);
    let dt = f64_at(14);
    let count = u64::from_le_bytes(header[22..30].try_into().unwrap());
    let count = usize::try_from(count)
        .map_err(|_| Error::Format(format!("sample count {count} too large")))?;

    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != count * 4 {
        return Err(Error::Format(format!(
            "expected {} sample bytes, found {}",
            count * 4,
            raw.len()
        )));
    }
    let samples = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Trace::new(t0, dt, samples).map_err(|e| Error::Format(e.to_string()))
}

pub fn save(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), trace)
}

pub fn load(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}
