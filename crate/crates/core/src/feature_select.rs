//! Univariate F-scores, PCA, and the full-vs-selected feature comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::data_model::{DataError, FeatureSource, TimeSeriesDataset};
use crate::ingest::{apply_imputation, apply_scaler, fit_imputation, fit_scaler, IngestError};
use crate::pipeline::{evaluate_prequential, EvalOptions, EvalSummary, PipelineError};
use crate::temporal::SplitPlan;

/// Finite stand-in for the infinite F-score of a perfectly correlated feature.
pub const SCORE_CAP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("empty row set")]
    EmptyRowSet,
    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("row {row}, column {column}: missing value")]
    MissingValue { row: usize, column: usize },
    #[error("row {row}: missing target")]
    MissingTarget { row: usize },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("data has numerical rank 0")]
    ZeroRank,
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("bad variant {0:?} (expected full, topk:K, pca:K or list:PATH)")]
    BadVariant(String),
    #[error("no initial training rows precede the first test row")]
    NoSelectionRows,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScore {
    pub column: usize,
    pub score: f64,
}

fn value<S: FeatureSource + ?Sized>(src: &S, row: usize, col: usize) -> Result<f64, SelectError> {
    src.feature(row, col)
        .ok_or(SelectError::MissingValue { row, column: col })
}

/// Univariate regression F-statistic `r²/(1 − r²)·(n − 2)` of each feature
/// against the target over `rows`. Constant feature or target scores 0.
pub fn univariate_scores<S: FeatureSource + ?Sized>(
    src: &S,
    rows: &[usize],
) -> Result<Vec<FeatureScore>, SelectError> {
    if rows.is_empty() {
        return Err(SelectError::EmptyRowSet);
    }
    let n = rows.len() as f64;
    let y: Vec<f64> = rows
        .iter()
        .map(|&i| {
            src.target_value(i)
                .ok_or(SelectError::MissingTarget { row: i })
        })
        .collect::<Result<_, _>>()?;
    let y_const = y.iter().all(|&v| v == y[0]);
    let my = y.iter().sum::<f64>() / n;
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    (0..src.n_features())
        .map(|j| {
            let x: Vec<f64> = rows
                .iter()
                .map(|&i| value(src, i, j))
                .collect::<Result<_, _>>()?;
            if y_const || x.iter().all(|&v| v == x[0]) {
                return Ok(FeatureScore {
                    column: j,
                    score: 0.0,
                });
            }
            let mx = x.iter().sum::<f64>() / n;
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for (a, b) in x.iter().zip(&y) {
                sxx += (a - mx) * (a - mx);
                sxy += (a - mx) * (b - my);
            }
            let r2 = (sxy * sxy / (sxx * syy)).min(1.0);
            let score = if r2 >= 1.0 {
                SCORE_CAP
            } else {
                (r2 / (1.0 - r2) * (n - 2.0)).clamp(0.0, SCORE_CAP)
            };
            Ok(FeatureScore { column: j, score })
        })
        .collect()
}

/// Columns of the `k` highest scores, ties to the lower column index,
/// returned in ranking order.
pub fn select_top_k(scores: &[FeatureScore], k: usize) -> Result<Vec<usize>, SelectError> {
    if k == 0 || k > scores.len() {
        return Err(SelectError::KOutOfRange {
            k,
            max: scores.len(),
        });
    }
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.column.cmp(&b.column)));
    Ok(ranked.into_iter().take(k).map(|s| s.column).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `k × d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Eigenvalues of the sample covariance, descending.
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
    /// Trace of the covariance, for variance ratios.
    pub total_variance: f64,
}

/// Requested more components than the data's numerical rank supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient {
    pub requested: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub model: PcaModel,
    pub warning: Option<RankDeficient>,
}

/// Top-`k` eigenvectors of the sample covariance over `rows`.
///
/// Each component's sign is fixed so its largest-magnitude entry is
/// positive. If `k` exceeds the numerical rank the model is truncated and a
/// [`RankDeficient`] warning returned.
pub fn fit_pca<S: FeatureSource + ?Sized>(
    src: &S,
    rows: &[usize],
    k: usize,
) -> Result<PcaFit, SelectError> {
    if rows.len() < 2 {
        return Err(SelectError::TooFewRows(rows.len()));
    }
    let d = src.n_features();
    if k == 0 || k > d.min(rows.len()) {
        return Err(SelectError::KOutOfRange {
            k,
            max: d.min(rows.len()),
        });
    }
    let n = rows.len();
    let mut x = DMatrix::<f64>::zeros(n, d);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..d {
            x[(r, j)] = value(src, i, j)?;
        }
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    for (j, &m) in mean.iter().enumerate() {
        x.column_mut(j).add_scalar_mut(-m);
    }
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]];
    let rank = order
        .iter()
        .take_while(|&&i| top > 0.0 && eig.eigenvalues[i] > top * 1e-10)
        .count();
    if rank == 0 {
        return Err(SelectError::ZeroRank);
    }
    let used = k.min(rank);
    let mut components = DMatrix::<f64>::zeros(used, d);
    for (r, &i) in order.iter().take(used).enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = (0..d).fold(
            0,
            |best, j| if v[j].abs() > v[best].abs() { j } else { best },
        );
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(r, j)] = sign * v[j];
        }
    }
    Ok(PcaFit {
        model: PcaModel {
            components,
            explained_variance: order
                .iter()
                .take(used)
                .map(|&i| eig.eigenvalues[i])
                .collect(),
            mean,
            total_variance,
        },
        warning: (used < k).then_some(RankDeficient { requested: k, used }),
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_components())
            .map(|r| {
                (0..x.len())
                    .map(|j| self.components[(r, j)] * (x[j] - self.mean[j]))
                    .sum()
            })
            .collect()
    }

    /// Map component scores back to feature space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        (0..self.mean.len())
            .map(|j| {
                self.mean[j]
                    + (0..z.len())
                        .map(|r| self.components[(r, j)] * z[r])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Replace the features of `ds` by their component scores `pc1..pck`.
pub fn transform_pca(
    model: &PcaModel,
    ds: &TimeSeriesDataset,
) -> Result<TimeSeriesDataset, SelectError> {
    let k = model.n_components();
    let mut out = Vec::with_capacity(ds.len() * k);
    for i in 0..ds.len() {
        let x = (0..ds.width())
            .map(|j| value(ds, i, j))
            .collect::<Result<Vec<_>, _>>()?;
        out.extend(model.project(&x).into_iter().map(Some));
    }
    let names = (1..=k).map(|r| format!("pc{r}")).collect();
    Ok(ds.with_features(names, out)?)
}

/// Feature list file: one column name per line; blank lines and `#`
/// comments are skipped.
pub fn parse_feature_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn resolve_features(
    ds: &TimeSeriesDataset,
    names: &[String],
) -> Result<Vec<usize>, SelectError> {
    names
        .iter()
        .map(|n| {
            ds.feature_names()
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| SelectError::UnknownFeature(n.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVariant {
    Full,
    TopK(usize),
    Pca(usize),
    /// Externally supplied selection (e.g. a forest importance ranking).
    Listed {
        label: String,
        names: Vec<String>,
    },
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureVariant::Full => f.write_str("full"),
            FeatureVariant::TopK(k) => write!(f, "topk:{k}"),
            FeatureVariant::Pca(k) => write!(f, "pca:{k}"),
            FeatureVariant::Listed { label, .. } => write!(f, "list:{label}"),
        }
    }
}

impl FromStr for FeatureVariant {
    type Err = SelectError;

    /// `full`, `topk:K` or `pca:K`. Listed variants need file access and are
    /// built by the caller.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SelectError::BadVariant(s.to_string());
        let s = s.trim();
        if s == "full" {
            return Ok(FeatureVariant::Full);
        }
        let (kind, k) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        match kind {
            "topk" => Ok(FeatureVariant::TopK(k)),
            "pca" => Ok(FeatureVariant::Pca(k)),
            _ => Err(bad()),
        }
    }
}

/// Initial-block rows stamped strictly before the earliest test row: the
/// rows every prediction is allowed to see.
pub fn selection_rows(ds: &TimeSeriesDataset, plan: &SplitPlan) -> Vec<usize> {
    let ts = ds.timestamps();
    let first_test = plan.test_rows().map(|i| ts[i]).min();
    plan.initial_train()
        .filter(|&i| first_test.is_none_or(|t| ts[i] < t))
        .collect()
}

/// Build the dataset a variant evaluates on. Selection statistics use only
/// [`selection_rows`].
pub fn prepare_variant(
    ds: &TimeSeriesDataset,
    plan: &SplitPlan,
    opts: &EvalOptions,
    variant: &FeatureVariant,
) -> Result<TimeSeriesDataset, SelectError> {
    match variant {
        FeatureVariant::Full => return Ok(ds.clone()),
        FeatureVariant::Listed { names, .. } => {
            return Ok(ds.select_features(&resolve_features(ds, names)?)?)
        }
        _ => {}
    }
    let rows = selection_rows(ds, plan);
    if rows.is_empty() {
        return Err(SelectError::NoSelectionRows);
    }
    let imputed = apply_imputation(ds, &fit_imputation(ds, &rows)?)?;
    match *variant {
        FeatureVariant::TopK(k) => {
            let scores = univariate_scores(&imputed, &rows)?;
            let mut cols = select_top_k(&scores, k)?;
            cols.sort_unstable();
            Ok(ds.select_features(&cols)?)
        }
        FeatureVariant::Pca(k) => {
            let basis = if opts.scale {
                apply_scaler(&imputed, &fit_scaler(&imputed, &rows)?)?
            } else {
                imputed
            };
            let fit = fit_pca(&basis, &rows, k)?;
            transform_pca(&fit.model, &basis)
        }
        _ => unreachable!(),
    }
}

#[derive(Debug, Error)]
pub enum VariantError {
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug)]
pub struct ComparisonRow {
    pub variant: FeatureVariant,
    pub result: Result<EvalSummary, VariantError>,
}

/// Run the same prequential evaluation on each feature variant.
pub fn compare_feature_sets(
    ds: &TimeSeriesDataset,
    plan: &SplitPlan,
    opts: &EvalOptions,
    variants: &[FeatureVariant],
) -> Vec<ComparisonRow> {
    variants
        .par_iter()
        .map(|v| {
            let result = prepare_variant(ds, plan, opts, v)
                .map_err(VariantError::from)
                .and_then(|d| Ok(evaluate_prequential(&d, plan, opts)?.summary));
            ComparisonRow {
                variant: v.clone(),
                result,
            }
        })
        .collect()
}

/// CSV `variant,mae,mse,rmse,r2` scored on quantized predictions.
pub fn write_comparison<W: std::io::Write>(
    mut w: W,
    rows: &[ComparisonRow],
) -> std::io::Result<()> {
    writeln!(w, "variant,mae,mse,rmse,r2")?;
    for r in rows {
        let name = crate::pipeline::csv_safe(&r.variant.to_string());
        match r.result.as_ref().map(|s| s.quantized) {
            Ok(Some(m)) => writeln!(w, "{name},{}", m.csv_fields())?,
            _ => writeln!(w, "{name},NA,NA,NA,NA")?,
        }
    }
    Ok(())
}
