//! Snapping raw predictions onto the measurement grid {0, 5, 10, ...}.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{PredictionRecord, Timestamp};

/// Grid spacing of the measured concentration.
pub const STEP: f64 = 5.0;
/// Values at or below this map to zero.
pub const ZERO_THRESHOLD: f64 = 2.5;
/// Absolute tolerance for "is a multiple of 5".
pub const MULTIPLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("non-finite prediction at index {index}")]
    NonFiniteInput { index: usize },
    #[error("unknown quantizer mode {0:?} (expected nearest or paper-literal)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizerMode {
    /// Round half-up to the nearest multiple of 5, zero at or below 2.5.
    #[default]
    Nearest,
    /// The printed piecewise rule, with an exact multiple of 5 kept as is.
    PaperLiteral,
}

impl fmt::Display for QuantizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantizerMode::Nearest => "nearest",
            QuantizerMode::PaperLiteral => "paper-literal",
        })
    }
}

impl FromStr for QuantizerMode {
    type Err = QuantizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(QuantizerMode::Nearest),
            "paper-literal" => Ok(QuantizerMode::PaperLiteral),
            other => Err(QuantizeError::UnknownMode(other.to_string())),
        }
    }
}

fn near_multiple(x: f64) -> Option<f64> {
    let m = STEP * (x / STEP).round();
    ((x - m).abs() <= MULTIPLE_TOL).then_some(m)
}

pub fn quantize(x: f64, mode: QuantizerMode) -> Result<f64, QuantizeError> {
    if !x.is_finite() {
        return Err(QuantizeError::NonFiniteInput { index: 0 });
    }
    if x <= ZERO_THRESHOLD {
        return Ok(0.0);
    }
    let q = match mode {
        QuantizerMode::Nearest => STEP * (x / STEP + 0.5).floor(),
        QuantizerMode::PaperLiteral => {
            if let Some(m) = near_multiple(x) {
                m
            } else if near_multiple(x - 0.01).is_some() {
                STEP * (x / STEP).floor() + STEP
            } else {
                STEP * (x / STEP).floor()
            }
        }
    };
    Ok(q)
}

/// Raw model output for one row, before quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPrediction {
    pub timestamp: Timestamp,
    pub raw: f64,
    pub truth: Option<f64>,
}

pub fn quantize_batch(
    records: &[RawPrediction],
    mode: QuantizerMode,
) -> Result<Vec<PredictionRecord>, QuantizeError> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let quantized =
                quantize(r.raw, mode).map_err(|_| QuantizeError::NonFiniteInput { index })?;
            Ok(PredictionRecord {
                timestamp: r.timestamp,
                raw: r.raw,
                quantized,
                truth: r.truth,
            })
        })
        .collect()
}

/// CSV `timestamp,raw,quantized[,truth]`; the truth column appears when any
/// record has one, blank for those that do not.
pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> io::Result<()> {
    let with_truth = records.iter().any(|r| r.truth.is_some());
    if with_truth {
        writeln!(w, "timestamp,raw,quantized,truth")?;
    } else {
        writeln!(w, "timestamp,raw,quantized")?;
    }
    for r in records {
        write!(w, "{},{},{}", r.timestamp, r.raw, r.quantized as i64)?;
        if with_truth {
            match r.truth {
                Some(t) => write!(w, ",{t}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
