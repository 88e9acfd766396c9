//! Prequential evaluation: replay a split plan in time order, retraining on
//! admissible rows and predicting each test row, plus the alpha sweep and
//! expanding-window cross-validation built on the same machinery.

use rayon::prelude::*;
use thiserror::Error;

use crate::data_model::{PredictionRecord, TimeSeriesDataset, Timestamp};
use crate::ingest::{fit_imputation, ImputationPlan, IngestError, ModeTracker};
use crate::metrics::{compute_metrics, MetricsError, MetricsReport};
use crate::postprocess::{quantize, QuantizeError, QuantizerMode};
use crate::ridge::{RankOneRidge, RidgeConfig, RidgeError, RidgeModelState};
use crate::temporal::{
    admissible_training_rows, make_cv_plan, prequential_schedule, ScheduleEvent, SplitPlan,
    TemporalError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training row {row} has no target value")]
    MissingTarget { row: usize },
    #[error("no training rows precede the validation block of fold {fold}")]
    EmptyTrainingWindow { fold: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("constraint violation at row {row}: {detail}")]
    ConstraintViolation { row: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub ridge: RidgeConfig,
    pub quantizer: QuantizerMode,
    /// Standardize features with statistics of the rows trained on so far.
    pub scale: bool,
    /// Refit the imputation modes at every prediction; otherwise they are
    /// frozen at the first prediction that has training data.
    pub refit_imputation: bool,
    /// Track the solution with Sherman–Morrison updates instead of
    /// re-solving. Needs `scale = false`, `alpha > 0` and an intercept.
    pub rank_one: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ridge: RidgeConfig::default(),
            quantizer: QuantizerMode::Nearest,
            scale: true,
            refit_imputation: true,
            rank_one: false,
        }
    }
}

/// Per-prediction record of what the model was allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditEntry {
    pub row: usize,
    pub prediction_time: Timestamp,
    pub max_train_time: Option<Timestamp>,
    /// Rows in the model's statistics when it predicted.
    pub absorbed: u64,
    /// Size of the admissible training set for this prediction.
    pub admissible: usize,
}

impl AuditEntry {
    pub fn is_causal(&self) -> bool {
        self.max_train_time.is_none_or(|m| m < self.prediction_time)
            && self.absorbed == self.admissible as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrediction {
    pub row: usize,
    pub record: PredictionRecord,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    /// Scored against raw predictions; `None` when no test row has a target.
    pub raw: Option<MetricsReport>,
    pub quantized: Option<MetricsReport>,
    pub predictions: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<ScoredPrediction>,
    pub audit: Vec<AuditEntry>,
    pub summary: EvalSummary,
    /// Model after every training row in the plan has been absorbed.
    pub model: RidgeModelState,
}

fn score(predictions: &[ScoredPrediction]) -> Result<EvalSummary, PipelineError> {
    let scored: Vec<&ScoredPrediction> = predictions
        .iter()
        .filter(|p| p.record.truth.is_some())
        .collect();
    let (raw, quantized) = if scored.is_empty() {
        (None, None)
    } else {
        let truth: Vec<f64> = scored.iter().map(|p| p.record.truth.unwrap()).collect();
        let raw: Vec<f64> = scored.iter().map(|p| p.record.raw).collect();
        let q: Vec<f64> = scored.iter().map(|p| p.record.quantized).collect();
        (
            Some(compute_metrics(&truth, &raw)?),
            Some(compute_metrics(&truth, &q)?),
        )
    };
    Ok(EvalSummary {
        raw,
        quantized,
        predictions: predictions.len(),
        fallbacks: predictions.iter().filter(|p| p.fallback).count(),
    })
}

fn check_options(opts: &EvalOptions) -> Result<(), PipelineError> {
    opts.ridge.validate()?;
    if opts.rank_one && (opts.scale || opts.ridge.alpha <= 0.0 || !opts.ridge.fit_intercept) {
        return Err(PipelineError::InvalidOptions(
            "rank-one updates need scaling off, alpha > 0 and an intercept".into(),
        ));
    }
    Ok(())
}

struct Learner<'a> {
    ds: &'a TimeSeriesDataset,
    opts: EvalOptions,
    tracker: ModeTracker,
    absorbed: Vec<usize>,
    pending: Vec<usize>,
    stats_plan: Option<ImputationPlan>,
    frozen: Option<ImputationPlan>,
    model: RidgeModelState,
    fast: Option<RankOneRidge>,
    max_train_time: Option<Timestamp>,
}

impl<'a> Learner<'a> {
    fn new(ds: &'a TimeSeriesDataset, opts: EvalOptions) -> Result<Self, PipelineError> {
        let d = ds.width();
        Ok(Learner {
            ds,
            opts,
            tracker: ModeTracker::new(d),
            absorbed: Vec::new(),
            pending: Vec::new(),
            stats_plan: None,
            frozen: None,
            model: RidgeModelState::new(d, opts.ridge)?,
            fast: if opts.rank_one {
                Some(RankOneRidge::new(d, opts.ridge)?)
            } else {
                None
            },
            max_train_time: None,
        })
    }

    fn retrain_at(&mut self, row: usize) -> Result<(), PipelineError> {
        if self.ds.target()[row].is_none() {
            return Err(PipelineError::MissingTarget { row });
        }
        self.tracker.absorb(self.ds.row(row));
        self.absorbed.push(row);
        self.pending.push(row);
        let t = self.ds.timestamps()[row];
        self.max_train_time = Some(self.max_train_time.map_or(t, |m| m.max(t)));
        Ok(())
    }

    fn impute(&self, plan: &ImputationPlan, row: usize) -> Result<Vec<f64>, PipelineError> {
        plan.impute_row(self.ds.row(row)).map_err(|e| match e {
            IngestError::UncoveredColumn { column } => IngestError::AllMissingColumn {
                column,
                name: self.ds.feature_names()[column].clone(),
            }
            .into(),
            other => other.into(),
        })
    }

    fn absorb_rows(&mut self, plan: &ImputationPlan, rows: &[usize]) -> Result<(), PipelineError> {
        for &i in rows {
            let x = self.impute(plan, i)?;
            let y = self.ds.target()[i].expect("checked on retrain");
            self.model.absorb_row(&x, y)?;
            if let Some(f) = self.fast.as_mut() {
                f.absorb(&x, y)?;
            }
        }
        Ok(())
    }

    /// Bring the statistics up to date with every absorbed row under the
    /// current imputation plan and solve.
    fn refresh(&mut self) -> Result<ImputationPlan, PipelineError> {
        let plan = if self.opts.refit_imputation {
            self.tracker.plan()
        } else {
            self.frozen
                .get_or_insert_with(|| self.tracker.plan())
                .clone()
        };
        if self.stats_plan.as_ref() != Some(&plan) {
            self.model.reset_stats();
            if self.fast.is_some() {
                self.fast = Some(RankOneRidge::new(self.ds.width(), self.opts.ridge)?);
            }
            let all = self.absorbed.clone();
            self.absorb_rows(&plan, &all)?;
        } else {
            let pending = std::mem::take(&mut self.pending);
            self.absorb_rows(&plan, &pending)?;
        }
        self.pending.clear();
        self.stats_plan = Some(plan.clone());
        if self.opts.scale {
            let sc = self.model.stats_scaler()?;
            self.model.set_scaler(sc)?;
        }
        if self.fast.is_none() && self.model.is_dirty() {
            self.model.solve()?;
        }
        Ok(plan)
    }

    fn predict_at(&mut self, row: usize) -> Result<(f64, bool), PipelineError> {
        if self.absorbed.is_empty() {
            return Ok((self.model.fallback, true));
        }
        let plan = self.refresh()?;
        let x = self.impute(&plan, row)?;
        let value = match &self.fast {
            Some(f) => {
                let (w, b) = f.solution()?;
                b + w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>()
            }
            None => self.model.predict(&x)?.value,
        };
        Ok((value, false))
    }

    fn finish(mut self) -> Result<RidgeModelState, PipelineError> {
        // The returned state always carries a direct solve.
        self.fast = None;
        if !self.absorbed.is_empty() {
            self.refresh()?;
        }
        Ok(self.model)
    }
}

/// Run the prequential schedule of `plan` over `ds`.
///
/// Every test row is predicted by a model whose statistics hold exactly the
/// training rows stamped strictly earlier; the audit trail records this and a
/// violation aborts the run.
pub fn evaluate_prequential(
    ds: &TimeSeriesDataset,
    plan: &SplitPlan,
    opts: &EvalOptions,
) -> Result<Evaluation, PipelineError> {
    check_options(opts)?;
    let timestamps = ds.timestamps();
    let schedule = prequential_schedule(plan, timestamps)?;
    let mut learner = Learner::new(ds, *opts)?;
    let mut predictions = Vec::new();
    let mut audit = Vec::new();
    for ev in schedule {
        match ev {
            ScheduleEvent::RetrainAt(i) => learner.retrain_at(i)?,
            ScheduleEvent::PredictAt(i) => {
                let t = timestamps[i];
                let (raw, fallback) = learner.predict_at(i)?;
                let entry = AuditEntry {
                    row: i,
                    prediction_time: t,
                    max_train_time: learner.max_train_time,
                    absorbed: learner.model.stats.count,
                    admissible: admissible_training_rows(timestamps, plan, t)?.len(),
                };
                if !entry.is_causal() {
                    return Err(PipelineError::ConstraintViolation {
                        row: i,
                        detail: format!(
                            "trained through {:?} on {} rows, {} admissible",
                            entry.max_train_time.map(|m| m.to_string()),
                            entry.absorbed,
                            entry.admissible
                        ),
                    });
                }
                audit.push(entry);
                let quantized =
                    quantize(raw, opts.quantizer).map_err(|_| QuantizeError::NonFiniteInput {
                        index: predictions.len(),
                    })?;
                predictions.push(ScoredPrediction {
                    row: i,
                    record: PredictionRecord {
                        timestamp: t,
                        raw,
                        quantized,
                        truth: ds.target()[i],
                    },
                    fallback,
                });
            }
        }
    }
    let model = learner.finish()?;
    let summary = score(&predictions)?;
    Ok(Evaluation {
        predictions,
        audit,
        summary,
        model,
    })
}

/// Audit CSV: `row_index,prediction_timestamp,max_train_timestamp,absorbed,admissible`.
pub fn write_audit<W: std::io::Write>(mut w: W, audit: &[AuditEntry]) -> std::io::Result<()> {
    writeln!(
        w,
        "row_index,prediction_timestamp,max_train_timestamp,absorbed,admissible"
    )?;
    for a in audit {
        let max = a.max_train_time.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            a.row, a.prediction_time, max, a.absorbed, a.admissible
        )?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct SweepRow {
    pub alpha: f64,
    pub result: Result<EvalSummary, PipelineError>,
}

/// One full prequential evaluation per alpha, in input order. Runs are
/// independent and execute in parallel.
pub fn sweep_alpha(
    ds: &TimeSeriesDataset,
    plan: &SplitPlan,
    base: &EvalOptions,
    alphas: &[f64],
) -> Result<Vec<SweepRow>, PipelineError> {
    if alphas.is_empty() {
        return Err(PipelineError::InvalidOptions("no alphas to sweep".into()));
    }
    if let Some(a) = alphas.iter().find(|a| a.is_nan() || **a < 0.0) {
        return Err(PipelineError::InvalidOptions(format!(
            "alpha {a} is negative"
        )));
    }
    Ok(alphas
        .par_iter()
        .map(|&alpha| {
            let mut opts = *base;
            opts.ridge.alpha = alpha;
            SweepRow {
                alpha,
                result: evaluate_prequential(ds, plan, &opts).map(|e| e.summary),
            }
        })
        .collect())
}

/// CSV `alpha,mae,mse,rmse,r2,n,status` scored on quantized predictions.
pub fn write_sweep<W: std::io::Write>(
    mut w: W,
    rows: &[SweepRow],
    raw: bool,
) -> std::io::Result<()> {
    writeln!(w, "alpha,mae,mse,rmse,r2,n,status")?;
    for r in rows {
        let report = r
            .result
            .as_ref()
            .map(|s| if raw { s.raw } else { s.quantized });
        match report {
            Ok(Some(m)) => writeln!(w, "{},{},{},ok", r.alpha, m.csv_fields(), m.n)?,
            Ok(None) => writeln!(w, "{},NA,NA,NA,NA,0,no scored rows", r.alpha)?,
            Err(e) => writeln!(w, "{},NA,NA,NA,NA,0,{}", r.alpha, csv_safe(&e.to_string()))?,
        }
    }
    Ok(())
}

pub(crate) fn csv_safe(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

#[derive(Debug)]
pub struct FoldResult {
    /// 1-based fold number.
    pub split: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub result: Result<EvalSummary, PipelineError>,
}

fn run_fold(
    ds: &TimeSeriesDataset,
    train: &[usize],
    validation: std::ops::Range<usize>,
    opts: &EvalOptions,
) -> Result<EvalSummary, PipelineError> {
    let plan = fit_imputation(ds, train)?;
    let mut model = RidgeModelState::new(ds.width(), opts.ridge)?;
    for &i in train {
        let y = ds.target()[i].ok_or(PipelineError::MissingTarget { row: i })?;
        model.absorb_row(&plan.impute_row(ds.row(i))?, y)?;
    }
    if opts.scale {
        let sc = model.stats_scaler()?;
        model.set_scaler(sc)?;
    }
    model.solve()?;
    let mut predictions = Vec::with_capacity(validation.len());
    for i in validation {
        let raw = model.predict(&plan.impute_row(ds.row(i))?)?.value;
        predictions.push(ScoredPrediction {
            row: i,
            record: PredictionRecord {
                timestamp: ds.timestamps()[i],
                raw,
                quantized: quantize(raw, opts.quantizer)?,
                truth: ds.target()[i],
            },
            fallback: false,
        });
    }
    score(&predictions)
}

/// Expanding-window cross-validation with `k` blocks (`k − 1` scored folds).
/// Each fold fits imputation, scaling and the model on its training window
/// only, restricted to rows stamped before the validation block.
pub fn cross_validate(
    ds: &TimeSeriesDataset,
    k: usize,
    opts: &EvalOptions,
) -> Result<Vec<FoldResult>, PipelineError> {
    check_options(opts)?;
    let cv = make_cv_plan(ds.len(), k)?;
    Ok((0..cv.folds.len())
        .into_par_iter()
        .map(|f| {
            let fold = &cv.folds[f];
            let train = cv.causal_training_rows(f, ds.timestamps());
            let result = if train.is_empty() {
                Err(PipelineError::EmptyTrainingWindow { fold: f + 1 })
            } else {
                run_fold(ds, &train, fold.validation.clone(), opts)
            };
            FoldResult {
                split: f + 1,
                train_rows: train.len(),
                validation_rows: fold.validation.len(),
                result,
            }
        })
        .collect())
}

/// CSV `split,mae,mse,rmse,r2` scored on quantized predictions.
pub fn write_cv<W: std::io::Write>(mut w: W, folds: &[FoldResult]) -> std::io::Result<()> {
    writeln!(w, "split,mae,mse,rmse,r2")?;
    for f in folds {
        match f.result.as_ref().map(|s| s.quantized) {
            Ok(Some(m)) => writeln!(w, "{},{}", f.split, m.csv_fields())?,
            _ => writeln!(w, "{},NA,NA,NA,NA", f.split)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{ColumnKind, ColumnSpec};
    use crate::temporal::Role;

    fn linear_ds(n: usize, gap_at: Option<usize>) -> TimeSeriesDataset {
        let start: Timestamp = "2021-01-30 06:23:06".parse().unwrap();
        let mut features = Vec::new();
        let mut target = Vec::new();
        let mut ts = Vec::new();
        for i in 0..n {
            let a = (i as f64 * 0.37).sin() * 4.0;
            let b = (i % 7) as f64;
            features.push(if Some(i) == gap_at { None } else { Some(a) });
            features.push(Some(b));
            target.push(Some(20.0 + 3.0 * a - 2.0 * b));
            ts.push(start.offset_seconds(60 * i as i64).unwrap());
        }
        TimeSeriesDataset::new(
            vec![
                ColumnSpec::new("timestamp", ColumnKind::Timestamp),
                ColumnSpec::new("a", ColumnKind::Numeric),
                ColumnSpec::new("b", ColumnKind::Numeric),
                ColumnSpec::new("target", ColumnKind::Target),
            ],
            vec!["a".into(), "b".into()],
            ts,
            features,
            target,
            Vec::new(),
        )
        .unwrap()
    }

    #[test]
    fn audit_is_causal_and_counts_match() {
        let ds = linear_ds(60, Some(30));
        let plan = crate::temporal::make_split_plan(60, 0.4, 0.5, 5).unwrap();
        let ev = evaluate_prequential(&ds, &plan, &EvalOptions::default()).unwrap();
        assert_eq!(ev.audit.len(), plan.test_rows().count());
        assert!(ev.audit.iter().all(AuditEntry::is_causal));
        assert_eq!(ev.model.stats.count as usize, plan.training_rows().count());
        assert!(ev.summary.quantized.unwrap().r_squared.unwrap() > 0.9);
    }

    #[test]
    fn leading_test_row_falls_back() {
        let ds = linear_ds(5, None);
        let plan = SplitPlan::from_roles(&[
            Role::Test,
            Role::Train,
            Role::Train,
            Role::Test,
            Role::Train,
        ])
        .unwrap();
        let ev = evaluate_prequential(&ds, &plan, &EvalOptions::default()).unwrap();
        assert!(ev.predictions[0].fallback);
        assert_eq!(ev.predictions[0].record.raw, 0.0);
        assert_eq!(ev.predictions[0].record.quantized, 0.0);
        assert!(!ev.predictions[1].fallback);
        assert_eq!(ev.summary.fallbacks, 1);
    }

    #[test]
    fn rank_one_agrees_with_resolve() {
        let ds = linear_ds(80, None);
        let plan = crate::temporal::make_split_plan(80, 0.3, 0.5, 2).unwrap();
        let base = EvalOptions {
            scale: false,
            ..EvalOptions::default()
        };
        let fast = EvalOptions {
            rank_one: true,
            ..base
        };
        let a = evaluate_prequential(&ds, &plan, &base).unwrap();
        let b = evaluate_prequential(&ds, &plan, &fast).unwrap();
        for (p, q) in a.predictions.iter().zip(&b.predictions) {
            assert!((p.record.raw - q.record.raw).abs() < 1e-8);
        }
        assert!(evaluate_prequential(
            &ds,
            &plan,
            &EvalOptions {
                rank_one: true,
                ..EvalOptions::default()
            }
        )
        .is_err());
    }

    #[test]
    fn frozen_and_refit_imputation_both_run() {
        let ds = linear_ds(50, Some(10));
        let plan = crate::temporal::make_split_plan(50, 0.4, 0.5, 1).unwrap();
        for refit in [true, false] {
            let opts = EvalOptions {
                refit_imputation: refit,
                ..EvalOptions::default()
            };
            assert!(evaluate_prequential(&ds, &plan, &opts).is_ok());
        }
    }

    #[test]
    fn sweep_and_cv_shapes() {
        let ds = linear_ds(100, None);
        let plan = crate::temporal::make_split_plan(100, 0.4, 0.5, 3).unwrap();
        let rows = sweep_alpha(&ds, &plan, &EvalOptions::default(), &[0.1, 1.0, 10.0]).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.alpha).collect::<Vec<_>>(),
            vec![0.1, 1.0, 10.0]
        );
        assert!(rows.iter().all(|r| r.result.is_ok()));
        assert!(sweep_alpha(&ds, &plan, &EvalOptions::default(), &[]).is_err());
        let folds = cross_validate(&ds, 5, &EvalOptions::default()).unwrap();
        assert_eq!(folds.len(), 4);
        assert_eq!(
            folds.iter().map(|f| f.split).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
        assert_eq!(
            cross_validate(&ds, 2, &EvalOptions::default())
                .unwrap()
                .len(),
            1
        );
    }
}
