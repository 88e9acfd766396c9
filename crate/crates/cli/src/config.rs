use std::fs;
use std::path::{Path, PathBuf};

use prqr_core::pipeline::EvalOptions;
use prqr_core::ridge::RidgeConfig;
use prqr_core::synth::SynthSpec;
use prqr_core::QuantizerMode;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PAPER_ALPHAS: [f64; 8] = [0.05, 0.1, 0.5, 0.8, 1.5, 2.0, 2.5, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Evaluate,
    Sweep,
    Cv,
    ReportMissing,
    CompareFeatures,
    Synth,
}

/// Generator settings for the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub informative: usize,
    pub noise_sigma: f64,
    pub missing_fraction: f64,
    pub collinearity: f64,
    pub start: String,
    pub step_seconds: i64,
    pub intercept: Option<f64>,
    pub feature_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = SynthSpec::default();
        SynthConfig {
            n: s.n,
            d: s.d,
            informative: s.informative,
            noise_sigma: s.noise_sigma,
            missing_fraction: s.missing_fraction,
            collinearity: s.collinearity,
            start: s.start.to_string(),
            step_seconds: s.step_seconds,
            intercept: s.intercept,
            feature_scale: s.feature_scale,
        }
    }
}

/// Every setting a command depends on. Printed at the start of each run;
/// feeding it back through `--config` repeats the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub split_plan: Option<PathBuf>,
    pub drop_categorical: bool,
    pub alpha: f64,
    pub alphas: Vec<f64>,
    pub quantizer: QuantizerMode,
    pub initial_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    /// CV block count.
    pub k: usize,
    pub variants: Vec<String>,
    pub out: PathBuf,
    pub scale: bool,
    pub freeze_imputation: bool,
    pub rank_one: bool,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            train: None,
            test: None,
            schema: None,
            split_plan: None,
            drop_categorical: false,
            alpha: RidgeConfig::default().alpha,
            alphas: PAPER_ALPHAS.to_vec(),
            quantizer: QuantizerMode::Nearest,
            initial_fraction: 0.4,
            test_fraction: 0.5,
            seed: 0,
            k: 5,
            variants: vec!["full".into(), "topk:10".into(), "pca:10".into()],
            out: PathBuf::from("out"),
            scale: true,
            freeze_imputation: false,
            rank_one: false,
            synth: SynthConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config is always serializable")
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            ridge: RidgeConfig::new(self.alpha),
            quantizer: self.quantizer,
            scale: self.scale,
            refit_imputation: !self.freeze_imputation,
            rank_one: self.rank_one,
        }
    }

    pub fn synth_spec(&self) -> Result<SynthSpec, CliError> {
        let s = &self.synth;
        let start = s
            .start
            .parse()
            .map_err(|e| CliError::Config(format!("synth start: {e}")))?;
        Ok(SynthSpec {
            n: s.n,
            d: s.d,
            informative: s.informative,
            beta: None,
            noise_sigma: s.noise_sigma,
            missing_fraction: s.missing_fraction,
            collinearity: s.collinearity,
            seed: self.seed,
            start,
            step_seconds: s.step_seconds,
            intercept: s.intercept,
            feature_scale: s.feature_scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig::defaults(Command::CompareFeatures);
        c.train = Some("a.csv".into());
        c.quantizer = QuantizerMode::PaperLiteral;
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_json().contains("\"command\":\"compare-features\""));
        assert!(c.to_json().contains("\"quantizer\":\"paper-literal\""));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(&RunConfig::defaults(Command::Fit).to_json()).unwrap();
        v["alpah"] = 1.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
