//! Seeded synthetic sensor data with a known linear ground truth.
//!
//! Draw order from `SplitMix64::new(seed)`, fixed so outputs are
//! reproducible anywhere:
//! 1. when `beta` is not given, for each informative column a sign
//!    (`u < 0.5` → negative) then a magnitude `1 + 2u`;
//! 2. per row: one shared factor `z0`, then `d` idiosyncratic normals, then
//!    one noise normal.
//!
//! The missing-cell mask comes from a second generator seeded with
//! `seed ^ MASK_STREAM`, one uniform per cell in row-major order.

use std::io::{self, Write};

use thiserror::Error;

use crate::data_model::{ColumnKind, ColumnSpec, TimeSeriesDataset, Timestamp};
use crate::postprocess::{quantize, QuantizerMode};
use crate::rng::SplitMix64;

pub const MASK_STREAM: u64 = 0xA5A5_A5A5_5A5A_5A5A;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub informative: usize,
    /// Explicit coefficients; must have exactly `d − informative` zeros.
    pub beta: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub missing_fraction: f64,
    /// Pairwise correlation between features, in `[0, 1)`.
    pub collinearity: f64,
    pub seed: u64,
    pub start: Timestamp,
    pub step_seconds: i64,
    /// Defaults to six signal standard deviations plus 10, which keeps the
    /// latent target positive in practice.
    pub intercept: Option<f64>,
    /// Standard deviation of every feature.
    pub feature_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 1000,
            d: 20,
            informative: 5,
            beta: None,
            noise_sigma: 0.1,
            missing_fraction: 0.0,
            collinearity: 0.0,
            seed: 42,
            start: "2021-01-30 06:23:06".parse().expect("valid literal"),
            step_seconds: 600,
            intercept: None,
            feature_scale: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: TimeSeriesDataset,
    pub beta: Vec<f64>,
    pub intercept: f64,
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n and d must be positive"));
        }
        if self.informative > self.d {
            return Err(invalid(format!(
                "informative {} exceeds d {}",
                self.informative, self.d
            )));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.d {
                return Err(invalid(format!(
                    "beta has {} entries, expected {}",
                    b.len(),
                    self.d
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(invalid("beta must be finite"));
            }
            let zeros = b.iter().filter(|&&v| v == 0.0).count();
            if zeros != self.d - self.informative {
                return Err(invalid(format!(
                    "beta has {zeros} zero entries, expected {}",
                    self.d - self.informative
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(invalid("missing_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.collinearity) {
            return Err(invalid("collinearity must lie in [0, 1)"));
        }
        if self.step_seconds <= 0 {
            return Err(invalid("step_seconds must be positive"));
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(invalid("feature_scale must be positive"));
        }
        if self.intercept.is_some_and(|c| !c.is_finite()) {
            return Err(invalid("intercept must be finite"));
        }
        let last = (self.n as i64 - 1).checked_mul(self.step_seconds);
        if last.and_then(|s| self.start.offset_seconds(s)).is_none() {
            return Err(invalid("timestamps overflow"));
        }
        Ok(())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = SplitMix64::new(spec.seed);
    let beta = match &spec.beta {
        Some(b) => b.clone(),
        None => (0..d)
            .map(|j| {
                if j < spec.informative {
                    let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                    sign * (1.0 + 2.0 * rng.next_f64())
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let rho = spec.collinearity;
    let sum_sq: f64 = beta.iter().map(|b| b * b).sum();
    let sum: f64 = beta.iter().sum();
    let signal_sd = spec.feature_scale * ((1.0 - rho) * sum_sq + rho * sum * sum).sqrt();
    let intercept = spec.intercept.unwrap_or(6.0 * signal_sd + 10.0);

    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut features = Vec::with_capacity(n * d);
    let mut target = Vec::with_capacity(n);
    let mut row = vec![0.0; d];
    for _ in 0..n {
        let z0 = rng.next_gaussian();
        for x in row.iter_mut() {
            *x = spec.feature_scale * (shared * z0 + own * rng.next_gaussian());
        }
        let noise = spec.noise_sigma * rng.next_gaussian();
        let latent = intercept + row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>() + noise;
        target.push(Some(
            quantize(latent, QuantizerMode::Nearest).expect("finite by construction"),
        ));
        features.extend(row.iter().map(|&v| Some(v)));
    }
    if spec.missing_fraction > 0.0 {
        let mut mask = SplitMix64::new(spec.seed ^ MASK_STREAM);
        for cell in features.iter_mut() {
            if mask.next_f64() < spec.missing_fraction {
                *cell = None;
            }
        }
    }

    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let mut columns = vec![ColumnSpec::new("timestamp", ColumnKind::Timestamp)];
    columns.extend(
        names
            .iter()
            .map(|s| ColumnSpec::new(s.clone(), ColumnKind::Numeric)),
    );
    columns.push(ColumnSpec::new("target", ColumnKind::Target));
    let timestamps = (0..n)
        .map(|i| {
            spec.start
                .offset_seconds(i as i64 * spec.step_seconds)
                .expect("validated")
        })
        .collect();
    let dataset = TimeSeriesDataset::new(columns, names, timestamps, features, target, Vec::new())
        .expect("consistent by construction");
    Ok(SynthData {
        dataset,
        beta,
        intercept,
    })
}

/// Write a dataset as pipeline-readable CSV: timestamp, features, target.
/// Numbers use the shortest representation that parses back exactly.
pub fn write_dataset_csv<W: Write>(mut w: W, ds: &TimeSeriesDataset) -> io::Result<()> {
    let target = ds
        .columns()
        .iter()
        .find(|c| c.kind == ColumnKind::Target)
        .map(|c| c.name.as_str())
        .unwrap_or("target");
    let ts_name = ds
        .columns()
        .iter()
        .find(|c| c.kind == ColumnKind::Timestamp)
        .map(|c| c.name.as_str())
        .unwrap_or("timestamp");
    write!(w, "{ts_name}")?;
    for name in ds.feature_names() {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",{target}")?;
    let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for i in 0..ds.len() {
        write!(w, "{}", ds.timestamps()[i])?;
        for v in ds.row(i) {
            write!(w, ",{}", cell(*v))?;
        }
        writeln!(w, ",{}", cell(ds.target()[i]))?;
    }
    Ok(())
}

/// Sidecar CSV `feature,beta`.
pub fn write_beta_csv<W: Write>(mut w: W, names: &[String], beta: &[f64]) -> io::Result<()> {
    writeln!(w, "feature,beta")?;
    for (n, b) in names.iter().zip(beta) {
        writeln!(w, "{n},{b}")?;
    }
    Ok(())
}
