use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("truth has {truth} values, predictions {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no values to score")]
    EmptyInput,
    #[error("non-finite value at index {index}")]
    NonFiniteInput { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the truth is constant (R² undefined).
    pub r_squared: Option<f64>,
    pub n: usize,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn ksum(values: impl Iterator<Item = f64>) -> f64 {
    let mut k = Kahan::default();
    values.for_each(|v| k.add(v));
    k.total()
}

pub fn compute_metrics(truth: &[f64], pred: &[f64]) -> Result<MetricsReport, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(index) = truth
        .iter()
        .zip(pred)
        .position(|(t, p)| !t.is_finite() || !p.is_finite())
    {
        return Err(MetricsError::NonFiniteInput { index });
    }
    let n = truth.len() as f64;
    let err = || truth.iter().zip(pred).map(|(t, p)| t - p);
    let mae = ksum(err().map(f64::abs)) / n;
    let sse = ksum(err().map(|e| e * e));
    let mse = sse / n;
    let r_squared = if truth.iter().all(|&t| t == truth[0]) {
        None
    } else {
        let mean = ksum(truth.iter().copied()) / n;
        let sst = ksum(truth.iter().map(|t| (t - mean) * (t - mean)));
        Some(1.0 - sse / sst)
    };
    Ok(MetricsReport {
        mae,
        mse,
        rmse: mse.sqrt(),
        r_squared,
        n: truth.len(),
    })
}

/// Displays as `NA` when undefined.
pub struct R2Cell(pub Option<f64>);

impl fmt::Display for R2Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("NA"),
        }
    }
}

impl MetricsReport {
    /// `mae,mse,rmse,r2`
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{}",
            self.mae,
            self.mse,
            self.rmse,
            R2Cell(self.r_squared)
        )
    }
}

/// Report CSV: header `mae,mse,rmse,r2,n`, one row per report.
pub fn write_report<W: Write>(mut w: W, reports: &[MetricsReport]) -> io::Result<()> {
    writeln!(w, "mae,mse,rmse,r2,n")?;
    for r in reports {
        writeln!(w, "{},{}", r.csv_fields(), r.n)?;
    }
    Ok(())
}
