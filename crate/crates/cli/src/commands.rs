use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use prqr_core::data_model::{parse_schema, ColumnSpec, TimeSeriesDataset};
use prqr_core::feature_select::{
    compare_feature_sets, parse_feature_list, write_comparison, FeatureVariant,
};
use prqr_core::ingest::{
    fit_imputation, load_csv, missing_report, write_missing_report, IngestError, LoadOptions,
};
use prqr_core::metrics::{MetricsReport, R2Cell};
use prqr_core::pipeline::{
    cross_validate, evaluate_prequential, sweep_alpha, write_audit, write_cv, write_sweep,
    EvalSummary, PipelineError,
};
use prqr_core::postprocess::write_predictions;
use prqr_core::ridge::{save_state, RidgeModelState};
use prqr_core::synth::{generate, write_beta_csv, write_dataset_csv};
use prqr_core::temporal::{make_split_plan, read_split_plan, Role, SplitPlan};
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::error::CliError;

/// JSON-lines run log. Entries carry no wall-clock data so reruns match.
pub struct RunLog {
    out: BufWriter<File>,
}

impl RunLog {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        Ok(RunLog {
            out: BufWriter::new(File::create(dir.join("run.jsonl"))?),
        })
    }

    pub fn event(&mut self, value: Value) -> Result<(), CliError> {
        writeln!(self.out, "{value}")?;
        self.out.flush()?;
        Ok(())
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    log: &'a mut RunLog,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn write_file(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.log.event(json!({"event": "wrote", "file": name}))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

pub fn run(cfg: &RunConfig, log: &mut RunLog) -> Result<(), CliError> {
    let mut ctx = Ctx { cfg, log };
    match cfg.command {
        Command::Fit => fit(&mut ctx),
        Command::Evaluate => evaluate(&mut ctx),
        Command::Sweep => sweep(&mut ctx),
        Command::Cv => cv(&mut ctx),
        Command::ReportMissing => report_missing(&mut ctx),
        Command::CompareFeatures => compare(&mut ctx),
        Command::Synth => synth(&mut ctx),
    }
}

fn train_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.train
        .as_deref()
        .ok_or_else(|| CliError::Config("--train is required".into()))
}

fn schema(cfg: &RunConfig) -> Result<Option<Vec<ColumnSpec>>, CliError> {
    match &cfg.schema {
        None => Ok(None),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("schema {}: {e}", p.display())))?;
            Ok(Some(parse_schema(&text)?))
        }
    }
}

fn load(cfg: &RunConfig, path: &Path) -> Result<TimeSeriesDataset, CliError> {
    let opts = LoadOptions {
        encode_categorical: !cfg.drop_categorical,
    };
    let schema = schema(cfg)?;
    load_csv(path, schema.as_deref(), opts)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Training data with target-less rows dropped.
fn labelled(cfg: &RunConfig) -> Result<TimeSeriesDataset, CliError> {
    let ds = load(cfg, train_path(cfg)?)?.drop_rows_without_target();
    if ds.is_empty() {
        return Err(IngestError::Empty.into());
    }
    Ok(ds)
}

/// Dataset and plan for prequential runs.
///
/// * `--test`: training and test files are merged in time order; every
///   training row has role TRAIN, every test row TEST.
/// * `--split-plan`: roles come from the file and index the training file's
///   rows in time order, so no rows are dropped.
/// * otherwise a seeded plan is drawn over the labelled training rows.
fn eval_inputs(ctx: &mut Ctx) -> Result<(TimeSeriesDataset, SplitPlan), CliError> {
    let cfg = ctx.cfg;
    let (ds, plan) = match (&cfg.test, &cfg.split_plan) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--test and --split-plan cannot be combined".into(),
            ))
        }
        (Some(test), None) => {
            let train = labelled(cfg)?;
            let test = load(cfg, test)?;
            let (ds, from_test) = train.merge(&test)?;
            let roles: Vec<Role> = from_test
                .iter()
                .map(|&t| if t { Role::Test } else { Role::Train })
                .collect();
            (ds, SplitPlan::from_roles(&roles)?)
        }
        (None, Some(path)) => {
            let ds = load(cfg, train_path(cfg)?)?;
            let file =
                File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            (ds, read_split_plan(file)?)
        }
        (None, None) => {
            let ds = labelled(cfg)?;
            let plan =
                make_split_plan(ds.len(), cfg.initial_fraction, cfg.test_fraction, cfg.seed)?;
            (ds, plan)
        }
    };
    ctx.log.event(json!({
        "event": "data",
        "rows": ds.len(),
        "features": ds.feature_names(),
        "initial": plan.initial_train().len(),
        "test": plan.test_rows().count(),
    }))?;
    Ok((ds, plan))
}

fn report_json(m: &Option<MetricsReport>) -> Value {
    match m {
        Some(m) => json!({"mae": m.mae, "mse": m.mse, "rmse": m.rmse, "r2": m.r_squared, "n": m.n}),
        None => Value::Null,
    }
}

fn summary_json(s: &EvalSummary) -> Value {
    json!({
        "raw": report_json(&s.raw),
        "quantized": report_json(&s.quantized),
        "predictions": s.predictions,
        "fallbacks": s.fallbacks,
    })
}

fn fit(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let ds = labelled(cfg)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let plan = fit_imputation(&ds, &all)?;
    let mut model = RidgeModelState::new(ds.width(), cfg.eval_options().ridge)?;
    for i in 0..ds.len() {
        let x = plan
            .impute_row(ds.row(i))
            .map_err(|e| CliError::Data(format!("row {i}: {e}")))?;
        model.absorb_row(&x, ds.target()[i].expect("labelled rows only"))?;
    }
    if cfg.scale {
        let sc = model.stats_scaler()?;
        model.set_scaler(sc)?;
    }
    model.solve()?;
    ctx.log
        .event(json!({"event": "fit", "rows": ds.len(), "features": ds.width()}))?;
    let path = ctx.path("model.prqr");
    save_state(&model, &path)?;
    ctx.log
        .event(json!({"event": "wrote", "file": "model.prqr"}))?;
    println!("wrote {}", path.display());
    let names = ds.feature_names().to_vec();
    ctx.write_file("imputation.csv", |w| {
        writeln!(w, "column,mode")?;
        for (n, m) in names.iter().zip(plan.modes()) {
            writeln!(w, "{n},{}", m.expect("fit on every row"))?;
        }
        Ok(())
    })
}

fn write_metrics<W: Write>(mut w: W, s: &EvalSummary) -> std::io::Result<()> {
    writeln!(w, "prediction,mae,mse,rmse,r2,n")?;
    for (name, m) in [("raw", s.raw), ("quantized", s.quantized)] {
        match m {
            Some(m) => writeln!(
                w,
                "{name},{},{},{},{},{}",
                m.mae,
                m.mse,
                m.rmse,
                R2Cell(m.r_squared),
                m.n
            )?,
            None => writeln!(w, "{name},NA,NA,NA,NA,0")?,
        }
    }
    Ok(())
}

fn evaluate(ctx: &mut Ctx) -> Result<(), CliError> {
    let (ds, plan) = eval_inputs(ctx)?;
    ctx.write_file("split_plan.csv", |w| plan.write_csv(w))?;
    let ev = evaluate_prequential(&ds, &plan, &ctx.cfg.eval_options())?;
    let records: Vec<_> = ev.predictions.iter().map(|p| p.record).collect();
    ctx.write_file("predictions.csv", |w| write_predictions(w, &records))?;
    ctx.write_file("audit.csv", |w| write_audit(w, &ev.audit))?;
    ctx.write_file("metrics.csv", |w| write_metrics(w, &ev.summary))?;
    let path = ctx.path("model.prqr");
    save_state(&ev.model, &path)?;
    ctx.log
        .event(json!({"event": "wrote", "file": "model.prqr"}))?;
    println!("wrote {}", path.display());
    ctx.log
        .event(json!({"event": "summary", "summary": summary_json(&ev.summary)}))?;
    if let Some(q) = ev.summary.quantized {
        println!("quantized: {}", q.csv_fields());
    }
    Ok(())
}

/// Audit failures inside per-row results still fail the run.
fn audit_failure(e: &PipelineError) -> Option<CliError> {
    matches!(e, PipelineError::ConstraintViolation { .. }).then(|| CliError::Audit(e.to_string()))
}

fn sweep(ctx: &mut Ctx) -> Result<(), CliError> {
    let (ds, plan) = eval_inputs(ctx)?;
    let rows = sweep_alpha(&ds, &plan, &ctx.cfg.eval_options(), &ctx.cfg.alphas)?;
    ctx.write_file("sweep.csv", |w| write_sweep(w, &rows, false))?;
    ctx.write_file("sweep_raw.csv", |w| write_sweep(w, &rows, true))?;
    for r in &rows {
        let status = match &r.result {
            Ok(s) => summary_json(s),
            Err(e) => json!({"error": e.to_string()}),
        };
        ctx.log
            .event(json!({"event": "sweep", "alpha": r.alpha, "result": status}))?;
    }
    match rows
        .iter()
        .find_map(|r| r.result.as_ref().err().and_then(audit_failure))
    {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cv(ctx: &mut Ctx) -> Result<(), CliError> {
    let ds = labelled(ctx.cfg)?;
    let folds = cross_validate(&ds, ctx.cfg.k, &ctx.cfg.eval_options())?;
    ctx.write_file("cv.csv", |w| write_cv(w, &folds))?;
    for f in &folds {
        let result = match &f.result {
            Ok(s) => summary_json(s),
            Err(e) => {
                eprintln!("warning: fold {}: {e}", f.split);
                json!({"error": e.to_string()})
            }
        };
        ctx.log.event(json!({
            "event": "fold",
            "split": f.split,
            "train_rows": f.train_rows,
            "validation_rows": f.validation_rows,
            "result": result,
        }))?;
    }
    Ok(())
}

fn report_missing(ctx: &mut Ctx) -> Result<(), CliError> {
    let ds = load(ctx.cfg, train_path(ctx.cfg)?)?;
    let rows = missing_report(&ds)?;
    ctx.write_file("missing.csv", |w| write_missing_report(w, &rows))
}

fn parse_variant(s: &str) -> Result<FeatureVariant, CliError> {
    match s.strip_prefix("list:") {
        Some(path) => {
            let path = Path::new(path);
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("feature list {}: {e}", path.display())))?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "list".into());
            Ok(FeatureVariant::Listed {
                label,
                names: parse_feature_list(&text),
            })
        }
        None => Ok(s.parse()?),
    }
}

fn compare(ctx: &mut Ctx) -> Result<(), CliError> {
    let variants: Vec<FeatureVariant> = ctx
        .cfg
        .variants
        .iter()
        .map(|v| parse_variant(v))
        .collect::<Result<_, _>>()?;
    if variants.is_empty() {
        return Err(CliError::Config("no feature variants given".into()));
    }
    let (ds, plan) = eval_inputs(ctx)?;
    let rows = compare_feature_sets(&ds, &plan, &ctx.cfg.eval_options(), &variants);
    ctx.write_file("comparison.csv", |w| write_comparison(w, &rows))?;
    let mut audit = None;
    for r in &rows {
        let result = match &r.result {
            Ok(s) => summary_json(s),
            Err(e) => {
                eprintln!("warning: variant {}: {e}", r.variant);
                if let prqr_core::feature_select::VariantError::Pipeline(p) = e {
                    audit = audit.or_else(|| audit_failure(p));
                }
                json!({"error": e.to_string()})
            }
        };
        ctx.log.event(
            json!({"event": "variant", "variant": r.variant.to_string(), "result": result}),
        )?;
    }
    audit.map_or(Ok(()), Err)
}

fn synth(ctx: &mut Ctx) -> Result<(), CliError> {
    let data = generate(&ctx.cfg.synth_spec()?)?;
    ctx.write_file("data.csv", |w| write_dataset_csv(w, &data.dataset))?;
    let names = data.dataset.feature_names().to_vec();
    ctx.write_file("beta.csv", |w| write_beta_csv(w, &names, &data.beta))?;
    ctx.log
        .event(json!({"event": "synth", "intercept": data.intercept}))
}
