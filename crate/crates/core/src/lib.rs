//! Causal ridge-regression forecasting for timestamped sensor data.
//!
//! A prediction for a row stamped `t` is made by a model trained only on
//! rows stamped strictly before `t`. The crate covers CSV ingest with mode
//! imputation, split planning and prequential scheduling, an incremental
//! closed-form ridge solver with a binary state file, univariate/PCA feature
//! selection, quantization of predictions onto a grid of 5, regression
//! metrics and a seeded synthetic data generator.

pub mod data_model;
pub mod feature_select;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod ridge;
pub mod rng;
pub mod synth;
pub mod temporal;

pub use data_model::{ColumnKind, ColumnSpec, PredictionRecord, TimeSeriesDataset, Timestamp};
pub use metrics::MetricsReport;
pub use pipeline::{EvalOptions, Evaluation};
pub use postprocess::QuantizerMode;
pub use ridge::{RidgeConfig, RidgeModelState};
pub use temporal::SplitPlan;
