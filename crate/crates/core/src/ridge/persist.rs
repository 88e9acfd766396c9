//! Binary model-state file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "PRQR" | version u32 | d u32 | alpha f64 | fit_intercept u8 | count u64
//! | gram d²·f64 (row-major) | moment d·f64 | sum_x d·f64 | sum_y f64
//! | scaler mean d·f64 | scaler stddev d·f64 | coefficients d·f64
//! | intercept f64 | crc32 u32 (over every preceding byte)
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{RidgeConfig, RidgeModelState, SuffStats};
use crate::ingest::ScalerStats;

pub const MAGIC: [u8; 4] = *b"PRQR";
pub const FORMAT_VERSION: u32 = 1;

const FIXED_HEADER: usize = 4 + 4 + 4 + 8 + 1 + 8;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("unsupported model file version {0}")]
    VersionUnsupported(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn corrupt(msg: impl Into<String>) -> PersistError {
    PersistError::CorruptFile(msg.into())
}

/// Number of f64 slots after the fixed header for width `d`.
fn float_slots(d: usize) -> Option<usize> {
    d.checked_mul(d)?
        .checked_add(d.checked_mul(5)?)?
        .checked_add(2)
}

pub fn encode_state(state: &RidgeModelState) -> Vec<u8> {
    let d = state.width();
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * float_slots(d).unwrap_or(0) + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&state.config.alpha.to_le_bytes());
    out.push(state.config.fit_intercept as u8);
    out.extend_from_slice(&state.stats.count.to_le_bytes());
    let floats = state
        .stats
        .gram
        .iter()
        .chain(&state.stats.moment)
        .chain(&state.stats.sum_x)
        .chain(std::iter::once(&state.stats.sum_y))
        .chain(&state.scaler.mean)
        .chain(&state.scaler.stddev)
        .chain(&state.coefficients)
        .chain(std::iter::once(&state.intercept));
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        a
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| f64::from_le_bytes(self.take())).collect()
    }
}

/// Decode a model-state file. Checks, in order: magic, version, length,
/// checksum, then field validity.
pub fn decode_state(bytes: &[u8]) -> Result<RidgeModelState, PersistError> {
    if bytes.len() < 8 {
        return Err(corrupt("truncated header"));
    }
    if bytes[..4] != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(PersistError::VersionUnsupported(version));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(corrupt("truncated header"));
    }
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = float_slots(d)
        .and_then(|s| s.checked_mul(8))
        .and_then(|s| s.checked_add(FIXED_HEADER + 4))
        .ok_or_else(|| corrupt("feature count overflows"))?;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "length {} does not match {expected} expected for {d} features",
            bytes.len()
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut c = Cursor { buf: body, pos: 12 };
    let alpha = f64::from_le_bytes(c.take());
    let fit_intercept = match c.take::<1>()[0] {
        0 => false,
        1 => true,
        b => return Err(corrupt(format!("fit_intercept byte {b}"))),
    };
    let count = u64::from_le_bytes(c.take());
    let gram = c.f64s(d * d);
    let moment = c.f64s(d);
    let sum_x = c.f64s(d);
    let sum_y = f64::from_le_bytes(c.take());
    let mean = c.f64s(d);
    let stddev = c.f64s(d);
    let coefficients = c.f64s(d);
    let intercept = f64::from_le_bytes(c.take());

    let config = RidgeConfig {
        alpha,
        fit_intercept,
    };
    config.validate().map_err(|e| corrupt(e.to_string()))?;
    let stats = SuffStats {
        d,
        gram,
        moment,
        sum_x,
        sum_y,
        count,
    };
    let mut state = RidgeModelState::from_parts(
        config,
        stats,
        ScalerStats { mean, stddev },
        coefficients,
        intercept,
    );
    // The format has no dirty flag: the state is clean iff the stored
    // solution is what solving the stored statistics gives.
    if count == 0 {
        state.mark_clean();
    } else {
        let mut check = state.clone();
        if check.solve().is_ok() {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()));
            let same = close(check.intercept, state.intercept)
                && check
                    .coefficients
                    .iter()
                    .zip(&state.coefficients)
                    .all(|(a, b)| close(*a, *b));
            if same {
                state.mark_clean();
            }
        }
    }
    Ok(state)
}

pub fn save_state(state: &RidgeModelState, path: &Path) -> Result<(), PersistError> {
    fs::write(path, encode_state(state))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<RidgeModelState, PersistError> {
    decode_state(&fs::read(path)?)
}
