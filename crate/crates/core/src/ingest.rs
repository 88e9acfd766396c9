//! CSV loading, mode imputation and standardization.
//!
//! Every fitting routine here takes an explicit row set so callers can
//! restrict statistics to rows that are admissible at the current point in
//! time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::data_model::{
    validate_schema, ColumnKind, ColumnSpec, DataError, FeatureSource, TimeSeriesDataset, Timestamp,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("no timestamp column found in header")]
    NoTimestampColumn,
    #[error("no rows")]
    Empty,
    #[error("line {line}: bad timestamp {value:?}")]
    BadTimestamp { line: u64, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {column} ({name}) has no present value in the fitting rows")]
    AllMissingColumn { column: usize, name: String },
    #[error("column {column} has missing values but no imputation value")]
    UncoveredColumn { column: usize },
    #[error("empty fit set")]
    EmptyFitSet,
    #[error("row {row}, column {column}: missing value where a complete row is required")]
    MissingValue { row: usize, column: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Encode each categorical column as one numeric code feature.
    pub encode_categorical: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            encode_categorical: true,
        }
    }
}

/// Load a CSV file. With `schema == None` the column roles are inferred
/// from the header and cell contents (see [`infer_schema`]).
pub fn load_csv(
    path: &Path,
    schema: Option<&[ColumnSpec]>,
    opts: LoadOptions,
) -> Result<TimeSeriesDataset, IngestError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => IngestError::FileNotFound(path.display().to_string()),
        _ => IngestError::Io(e),
    })?;
    read_csv(file, schema, opts)
}

fn parse_number(cell: &str) -> Option<f64> {
    let v = cell.trim().parse::<f64>().ok()?;
    v.is_finite().then_some(v)
}

/// Guess column roles from the header and the cells below it.
///
/// The timestamp column is the one named `timestamp`/`time`/`date`, else the
/// first column whose first non-empty cell parses as a timestamp. The target
/// is the column named `target`, `y_var` or `y`, else the last remaining
/// column. Other columns are numeric when most non-empty cells parse as
/// finite numbers, categorical otherwise.
pub fn infer_schema(
    header: &[String],
    rows: &[Vec<String>],
) -> Result<Vec<ColumnSpec>, IngestError> {
    let lower: Vec<String> = header
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let ts_col = lower
        .iter()
        .position(|h| matches!(h.as_str(), "timestamp" | "time" | "date"))
        .or_else(|| {
            (0..header.len()).find(|&j| {
                rows.iter()
                    .map(|r| r.get(j).map(String::as_str).unwrap_or(""))
                    .find(|c| !c.trim().is_empty())
                    .is_some_and(|c| c.parse::<Timestamp>().is_ok())
            })
        })
        .ok_or(IngestError::NoTimestampColumn)?;
    let target_col = lower
        .iter()
        .enumerate()
        .position(|(j, h)| j != ts_col && matches!(h.as_str(), "target" | "y_var" | "y"))
        .or_else(|| (0..header.len()).rev().find(|&j| j != ts_col))
        .ok_or_else(|| IngestError::SchemaMismatch("no target column".into()))?;
    let columns = header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let kind = if j == ts_col {
                ColumnKind::Timestamp
            } else if j == target_col {
                ColumnKind::Target
            } else {
                let (mut present, mut numeric) = (0usize, 0usize);
                for r in rows {
                    let c = r.get(j).map(String::as_str).unwrap_or("").trim();
                    if !c.is_empty() {
                        present += 1;
                        if parse_number(c).is_some() {
                            numeric += 1;
                        }
                    }
                }
                if present == 0 || numeric * 2 > present {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                }
            };
            ColumnSpec::new(name.trim(), kind)
        })
        .collect();
    Ok(columns)
}

/// Parse CSV text from any reader. Rows are returned sorted by timestamp
/// (stable, so equal timestamps keep file order); unparseable numeric cells
/// become missing.
pub fn read_csv<R: Read>(
    reader: R,
    schema: Option<&[ColumnSpec]>,
    opts: LoadOptions,
) -> Result<TimeSeriesDataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(IngestError::Empty);
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut lines: Vec<u64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        lines.push(rec.position().map(|p| p.line()).unwrap_or(0));
        cells.push(rec.iter().map(str::to_string).collect());
    }

    let columns: Vec<ColumnSpec> = match schema {
        Some(s) => {
            let mut ordered = Vec::with_capacity(header.len());
            for h in &header {
                let spec = s.iter().find(|c| &c.name == h).ok_or_else(|| {
                    IngestError::SchemaMismatch(format!("header column {h:?} not in schema"))
                })?;
                ordered.push(spec.clone());
            }
            if let Some(missing) = s.iter().find(|c| !header.contains(&c.name)) {
                return Err(IngestError::SchemaMismatch(format!(
                    "schema column {:?} not in header",
                    missing.name
                )));
            }
            ordered
        }
        None => infer_schema(&header, &cells)?,
    };
    if !columns.iter().any(|c| c.kind == ColumnKind::Timestamp) {
        return Err(IngestError::NoTimestampColumn);
    }
    validate_schema(&columns).map_err(|e| IngestError::SchemaMismatch(e.to_string()))?;

    let ts_col = columns
        .iter()
        .position(|c| c.kind == ColumnKind::Timestamp)
        .unwrap();
    let target_col = columns
        .iter()
        .position(|c| c.kind == ColumnKind::Target)
        .unwrap();

    let mut stamps = Vec::with_capacity(cells.len());
    for (r, line) in cells.iter().zip(&lines) {
        let raw = &r[ts_col];
        let t = raw
            .parse::<Timestamp>()
            .map_err(|_| IngestError::BadTimestamp {
                line: *line,
                value: raw.clone(),
            })?;
        stamps.push(t);
    }
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| stamps[i]);

    let feature_cols: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| match c.kind {
            ColumnKind::Numeric => true,
            ColumnKind::Categorical => opts.encode_categorical,
            _ => false,
        })
        .map(|(j, _)| j)
        .collect();
    let first_cat = columns
        .iter()
        .position(|c| c.kind == ColumnKind::Categorical);

    // Category codes in order of first appearance along the time axis.
    let mut levels: HashMap<usize, HashMap<String, u32>> = HashMap::new();
    let mut code_of = |j: usize, cell: &str| -> Option<u32> {
        let cell = cell.trim();
        if cell.is_empty() {
            return None;
        }
        let map = levels.entry(j).or_default();
        let next = map.len() as u32;
        Some(*map.entry(cell.to_string()).or_insert(next))
    };

    let n = cells.len();
    let mut features = Vec::with_capacity(n * feature_cols.len());
    let mut target = Vec::with_capacity(n);
    let mut categorical = Vec::new();
    let mut timestamps = Vec::with_capacity(n);
    for &i in &order {
        let row = &cells[i];
        timestamps.push(stamps[i]);
        // Codes are assigned for every categorical column, encoded or not.
        let mut codes: HashMap<usize, Option<u32>> = HashMap::new();
        for (j, c) in columns.iter().enumerate() {
            if c.kind == ColumnKind::Categorical {
                codes.insert(j, code_of(j, &row[j]));
            }
        }
        for &j in &feature_cols {
            let v = match columns[j].kind {
                ColumnKind::Categorical => codes[&j].map(f64::from),
                _ => parse_number(&row[j]),
            };
            features.push(v);
        }
        target.push(parse_number(&row[target_col]));
        if let Some(j) = first_cat {
            categorical.push(codes[&j]);
        }
    }
    let feature_names = feature_cols
        .iter()
        .map(|&j| columns[j].name.clone())
        .collect();
    Ok(TimeSeriesDataset::new(
        columns,
        feature_names,
        timestamps,
        features,
        target,
        categorical,
    )?)
}

/// Per-column replacement value for missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationPlan {
    modes: Vec<Option<f64>>,
}

impl ImputationPlan {
    pub fn from_modes(modes: Vec<Option<f64>>) -> Self {
        ImputationPlan { modes }
    }

    pub fn modes(&self) -> &[Option<f64>] {
        &self.modes
    }

    pub fn width(&self) -> usize {
        self.modes.len()
    }

    /// Fill one row; errors if a missing cell has no replacement.
    pub fn impute_row(&self, row: &[Option<f64>]) -> Result<Vec<f64>, IngestError> {
        if row.len() != self.modes.len() {
            return Err(IngestError::DimensionMismatch {
                expected: self.modes.len(),
                got: row.len(),
            });
        }
        row.iter()
            .zip(&self.modes)
            .enumerate()
            .map(|(j, (v, m))| v.or(*m).ok_or(IngestError::UncoveredColumn { column: j }))
            .collect()
    }
}

fn normalize_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Most frequent present value over `values`, ties to the smallest value.
fn mode_of(mut values: Vec<f64>) -> Option<f64> {
    values.iter_mut().for_each(|v| *v = normalize_zero(*v));
    values.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] == values[i] {
            j += 1;
        }
        // Ascending scan with a strict comparison keeps the smallest on ties.
        if best.is_none_or(|(_, c)| j - i > c) {
            best = Some((values[i], j - i));
        }
        i = j;
    }
    best.map(|(v, _)| v)
}

/// Fit the mode of every column over `fit_rows`.
pub fn fit_imputation<S: FeatureSource + ?Sized>(
    src: &S,
    fit_rows: &[usize],
) -> Result<ImputationPlan, IngestError> {
    if fit_rows.is_empty() {
        return Err(IngestError::EmptyFitSet);
    }
    let d = src.n_features();
    let mut modes = Vec::with_capacity(d);
    for j in 0..d {
        let present: Vec<f64> = fit_rows.iter().filter_map(|&i| src.feature(i, j)).collect();
        match mode_of(present) {
            Some(m) => modes.push(Some(m)),
            None => {
                return Err(IngestError::AllMissingColumn {
                    column: j,
                    name: src.feature_name(j),
                })
            }
        }
    }
    Ok(ImputationPlan { modes })
}

/// Replace every missing cell by its column's planned value.
pub fn apply_imputation(
    ds: &TimeSeriesDataset,
    plan: &ImputationPlan,
) -> Result<TimeSeriesDataset, IngestError> {
    let d = ds.width();
    if plan.width() != d {
        return Err(IngestError::DimensionMismatch {
            expected: d,
            got: plan.width(),
        });
    }
    let mut out = ds.clone();
    for (k, cell) in out.features_mut().iter_mut().enumerate() {
        if cell.is_none() {
            let j = k % d;
            *cell = Some(plan.modes[j].ok_or(IngestError::UncoveredColumn { column: j })?);
        }
    }
    Ok(out)
}

/// Running per-column mode that agrees with [`fit_imputation`] over the rows
/// absorbed so far.
#[derive(Debug, Clone, Default)]
pub struct ModeTracker {
    columns: Vec<ColumnMode>,
}

#[derive(Debug, Clone, Default)]
struct ColumnMode {
    counts: HashMap<u64, u64>,
    best: Option<(f64, u64)>,
}

impl ColumnMode {
    fn add(&mut self, v: f64) {
        let v = normalize_zero(v);
        let c = self.counts.entry(v.to_bits()).or_insert(0);
        *c += 1;
        let c = *c;
        // Counts only grow, so only the value just incremented can take over.
        match self.best {
            Some((bv, bc)) if c < bc || (c == bc && bv.total_cmp(&v).is_le()) => {}
            _ => self.best = Some((v, c)),
        }
    }
}

impl ModeTracker {
    pub fn new(width: usize) -> Self {
        ModeTracker {
            columns: vec![ColumnMode::default(); width],
        }
    }

    pub fn absorb(&mut self, row: &[Option<f64>]) {
        for (col, v) in self.columns.iter_mut().zip(row) {
            if let Some(v) = v {
                col.add(*v);
            }
        }
    }

    pub fn plan(&self) -> ImputationPlan {
        ImputationPlan {
            modes: self
                .columns
                .iter()
                .map(|c| c.best.map(|(v, _)| v))
                .collect(),
        }
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl ScalerStats {
    /// Mean 0, stddev 1: scaling is a no-op.
    pub fn identity(d: usize) -> Self {
        ScalerStats {
            mean: vec![0.0; d],
            stddev: vec![1.0; d],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.stddev.iter().all(|&s| s == 1.0)
    }

    pub fn scale(&self, j: usize, x: f64) -> f64 {
        let s = self.stddev[j];
        if s == 0.0 {
            0.0
        } else {
            (x - self.mean[j]) / s
        }
    }

    pub fn unscale(&self, j: usize, z: f64) -> f64 {
        z * self.stddev[j] + self.mean[j]
    }
}

/// Mean and population standard deviation of each column over `fit_rows`.
pub fn fit_scaler<S: FeatureSource + ?Sized>(
    src: &S,
    fit_rows: &[usize],
) -> Result<ScalerStats, IngestError> {
    if fit_rows.is_empty() {
        return Err(IngestError::EmptyFitSet);
    }
    let d = src.n_features();
    let n = fit_rows.len() as f64;
    let mut mean = vec![0.0; d];
    let mut stddev = vec![0.0; d];
    for j in 0..d {
        let mut sum = 0.0;
        for &i in fit_rows {
            sum += src
                .feature(i, j)
                .ok_or(IngestError::MissingValue { row: i, column: j })?;
        }
        let m = sum / n;
        let mut ss = 0.0;
        for &i in fit_rows {
            let e = src.feature(i, j).unwrap() - m;
            ss += e * e;
        }
        mean[j] = m;
        stddev[j] = (ss / n).sqrt();
    }
    Ok(ScalerStats { mean, stddev })
}

/// Standardize every present cell; zero-variance columns become all zeros.
pub fn apply_scaler(
    ds: &TimeSeriesDataset,
    stats: &ScalerStats,
) -> Result<TimeSeriesDataset, IngestError> {
    let d = ds.width();
    if stats.width() != d || stats.stddev.len() != d {
        return Err(IngestError::DimensionMismatch {
            expected: d,
            got: stats.width(),
        });
    }
    let mut out = ds.clone();
    for (k, cell) in out.features_mut().iter_mut().enumerate() {
        if let Some(v) = cell {
            *v = stats.scale(k % d, *v);
        }
    }
    Ok(out)
}

/// Inverse of [`apply_scaler`] for non-constant columns.
pub fn unapply_scaler(
    ds: &TimeSeriesDataset,
    stats: &ScalerStats,
) -> Result<TimeSeriesDataset, IngestError> {
    let d = ds.width();
    if stats.width() != d {
        return Err(IngestError::DimensionMismatch {
            expected: d,
            got: stats.width(),
        });
    }
    let mut out = ds.clone();
    for (k, cell) in out.features_mut().iter_mut().enumerate() {
        if let Some(v) = cell {
            *v = stats.unscale(k % d, *v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingReportRow {
    pub column: String,
    pub missing_count: usize,
    pub missing_fraction: f64,
}

/// Missing-cell counts for every feature column followed by the target.
pub fn missing_report(ds: &TimeSeriesDataset) -> Result<Vec<MissingReportRow>, IngestError> {
    if ds.is_empty() {
        return Err(IngestError::Empty);
    }
    let n = ds.len() as f64;
    let mut rows: Vec<MissingReportRow> = ds
        .feature_names()
        .iter()
        .zip(ds.missing_counts())
        .map(|(name, c)| MissingReportRow {
            column: name.clone(),
            missing_count: c,
            missing_fraction: c as f64 / n,
        })
        .collect();
    if let Some(t) = ds.columns().iter().find(|c| c.kind == ColumnKind::Target) {
        let c = ds.target().iter().filter(|v| v.is_none()).count();
        rows.push(MissingReportRow {
            column: t.name.clone(),
            missing_count: c,
            missing_fraction: c as f64 / n,
        });
    }
    Ok(rows)
}

pub fn write_missing_report<W: Write>(mut w: W, rows: &[MissingReportRow]) -> io::Result<()> {
    writeln!(w, "column,missing_count,missing_fraction")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:?}",
            r.column, r.missing_count, r.missing_fraction
        )?;
    }
    Ok(())
}
