//! `prqr`: causal ridge forecasting from the command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad data or configuration,
//! 3 solver failure, 4 temporal audit violation.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prqr_core::QuantizerMode;
use serde_json::json;

use config::{Command, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "prqr",
    version,
    about = "Causal ridge regression for timestamped sensor data"
)]
struct Cli {
    /// Replay a saved run configuration (`run_config.json`). Flags given
    /// alongside it override the stored values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fit one model on every labelled training row and save it.
    Fit(Common),
    /// Prequential evaluation with predictions, metrics and a causality audit.
    Evaluate(Common),
    /// Evaluate a list of penalties.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated penalties (default: 0.05,0.1,0.5,0.8,1.5,2,2.5,3).
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Expanding-window cross-validation.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Number of time blocks; k - 1 folds are scored.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Per-column missing-value counts.
    ReportMissing(Common),
    /// Compare feature sets under the same evaluation.
    CompareFeatures {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variants: full, topk:K, pca:K, list:PATH.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// Write a synthetic dataset and its true coefficients.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Training CSV.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test CSV; its rows are predicted, training rows feed the model.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Schema file with `name,kind` lines.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Split plan CSV (`row_index,role`) instead of a seeded split.
    #[arg(long)]
    split_plan: Option<PathBuf>,
    /// Ridge penalty.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_name = "nearest|paper-literal")]
    quantizer: Option<QuantizerMode>,
    #[arg(long)]
    initial_fraction: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train on raw feature values.
    #[arg(long)]
    no_scale: bool,
    /// Keep the imputation modes from the first prediction.
    #[arg(long)]
    freeze_imputation: bool,
    /// Sherman-Morrison updates instead of re-solving (needs --no-scale).
    #[arg(long)]
    rank_one: bool,
    /// Ignore categorical columns instead of encoding them.
    #[arg(long)]
    drop_categorical: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    informative: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    missing_fraction: Option<f64>,
    #[arg(long)]
    collinearity: Option<f64>,
    /// First timestamp, `YYYY-MM-DD HH:MM:SS`.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    step_seconds: Option<i64>,
    #[arg(long)]
    intercept: Option<f64>,
    #[arg(long)]
    feature_scale: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Common {
    fn apply(self, c: &mut RunConfig) {
        c.train = self.train.or(c.train.take());
        c.test = self.test.or(c.test.take());
        c.schema = self.schema.or(c.schema.take());
        c.split_plan = self.split_plan.or(c.split_plan.take());
        set(&mut c.alpha, self.alpha);
        set(&mut c.quantizer, self.quantizer);
        set(&mut c.initial_fraction, self.initial_fraction);
        set(&mut c.test_fraction, self.test_fraction);
        set(&mut c.seed, self.seed);
        set(&mut c.out, self.out);
        c.scale &= !self.no_scale;
        c.freeze_imputation |= self.freeze_imputation;
        c.rank_one |= self.rank_one;
        c.drop_categorical |= self.drop_categorical;
    }
}

impl Cmd {
    fn kind(&self) -> Command {
        match self {
            Cmd::Fit(_) => Command::Fit,
            Cmd::Evaluate(_) => Command::Evaluate,
            Cmd::Sweep { .. } => Command::Sweep,
            Cmd::Cv { .. } => Command::Cv,
            Cmd::ReportMissing(_) => Command::ReportMissing,
            Cmd::CompareFeatures { .. } => Command::CompareFeatures,
            Cmd::Synth { .. } => Command::Synth,
        }
    }

    fn apply(self, c: &mut RunConfig) {
        match self {
            Cmd::Fit(common) | Cmd::Evaluate(common) | Cmd::ReportMissing(common) => {
                common.apply(c)
            }
            Cmd::Sweep { common, alphas } => {
                common.apply(c);
                set(&mut c.alphas, alphas);
            }
            Cmd::Cv { common, k } => {
                common.apply(c);
                set(&mut c.k, k);
            }
            Cmd::CompareFeatures { common, variants } => {
                common.apply(c);
                set(&mut c.variants, variants);
            }
            Cmd::Synth { common, synth } => {
                common.apply(c);
                let s = &mut c.synth;
                set(&mut s.n, synth.n);
                set(&mut s.d, synth.d);
                set(&mut s.informative, synth.informative);
                set(&mut s.noise_sigma, synth.noise);
                set(&mut s.missing_fraction, synth.missing_fraction);
                set(&mut s.collinearity, synth.collinearity);
                set(&mut s.start, synth.start);
                set(&mut s.step_seconds, synth.step_seconds);
                s.intercept = synth.intercept.or(s.intercept);
                set(&mut s.feature_scale, synth.feature_scale);
            }
        }
    }
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, &cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(cmd)) => RunConfig::defaults(cmd.kind()),
        (None, None) => return Err(CliError::Config("a command or --config is required".into())),
    };
    if let Some(cmd) = cli.command {
        if cmd.kind() != cfg.command {
            return Err(CliError::Config(format!(
                "command {:?} does not match the configuration's {:?}",
                cmd.kind(),
                cfg.command
            )));
        }
        cmd.apply(&mut cfg);
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)?;
    let json = cfg.to_json();
    println!("{json}");
    fs::write(cfg.out.join("run_config.json"), format!("{json}\n"))?;
    let mut log = commands::RunLog::create(&cfg.out)?;
    log.event(json!({"event": "config", "config": cfg}))?;
    let result = commands::run(cfg, &mut log);
    let status = match &result {
        Ok(()) => json!({"event": "done", "exit": 0}),
        Err(e) => json!({"event": "error", "exit": e.exit_code(), "message": e.to_string()}),
    };
    log.event(status)?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match resolve(cli).and_then(|cfg| execute(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
