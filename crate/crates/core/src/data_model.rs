//! Core domain types shared by the rest of the crate.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Text layout used for every timestamp read or written by this crate.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("row index {index} out of range for dataset with {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid timestamp {0:?}, expected YYYY-MM-DD HH:MM:SS")]
    BadTimestamp(String),
    #[error("unknown column kind {0:?}")]
    BadColumnKind(String),
    #[error("schema line {line}: {reason}")]
    BadSchema { line: usize, reason: String },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

/// UTC instant with second precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

impl Timestamp {
    pub fn from_unix_seconds(secs: i64) -> Option<Self> {
        DateTime::from_timestamp(secs, 0).map(|dt| Timestamp(dt.naive_utc()))
    }

    pub fn unix_seconds(&self) -> i64 {
        self.0.and_utc().timestamp()
    }

    /// Shift by a signed number of seconds, `None` on overflow.
    pub fn offset_seconds(&self, secs: i64) -> Option<Self> {
        self.unix_seconds()
            .checked_add(secs)
            .and_then(Self::from_unix_seconds)
    }
}

impl FromStr for Timestamp {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
            .map(Timestamp)
            .map_err(|_| DataError::BadTimestamp(s.to_string()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TIMESTAMP_FORMAT))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Target,
    Timestamp,
}

impl FromStr for ColumnKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" => Ok(ColumnKind::Numeric),
            "categorical" => Ok(ColumnKind::Categorical),
            "target" => Ok(ColumnKind::Target),
            "timestamp" => Ok(ColumnKind::Timestamp),
            _ => Err(DataError::BadColumnKind(s.to_string())),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Target => "target",
            ColumnKind::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
        }
    }
}

/// Parse a schema file: one `name,kind` pair per line. Blank lines and lines
/// starting with `#` are ignored, as is an optional `name,kind` header.
pub fn parse_schema(text: &str) -> Result<Vec<ColumnSpec>, DataError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, kind) = line.rsplit_once(',').ok_or_else(|| DataError::BadSchema {
            line: i + 1,
            reason: "expected `name,kind`".into(),
        })?;
        if out.is_empty() && name.trim() == "name" && kind.trim() == "kind" {
            continue;
        }
        let kind = kind
            .parse::<ColumnKind>()
            .map_err(|e| DataError::BadSchema {
                line: i + 1,
                reason: e.to_string(),
            })?;
        out.push(ColumnSpec::new(name.trim(), kind));
    }
    validate_schema(&out)?;
    Ok(out)
}

/// Exactly one timestamp column, exactly one target column, unique names.
pub fn validate_schema(columns: &[ColumnSpec]) -> Result<(), DataError> {
    let count = |k: ColumnKind| columns.iter().filter(|c| c.kind == k).count();
    let bad = |reason: String| DataError::BadSchema { line: 0, reason };
    if count(ColumnKind::Timestamp) != 1 {
        return Err(bad(format!(
            "expected exactly one timestamp column, found {}",
            count(ColumnKind::Timestamp)
        )));
    }
    if count(ColumnKind::Target) != 1 {
        return Err(bad(format!(
            "expected exactly one target column, found {}",
            count(ColumnKind::Target)
        )));
    }
    for (i, c) in columns.iter().enumerate() {
        if columns[..i].iter().any(|o| o.name == c.name) {
            return Err(bad(format!("duplicate column name {:?}", c.name)));
        }
    }
    Ok(())
}

/// Read access to a feature matrix by (row, column).
///
/// Fitting routines take this rather than a concrete dataset so tests can
/// observe exactly which rows a fit touches.
pub trait FeatureSource {
    fn n_rows(&self) -> usize;
    fn n_features(&self) -> usize;
    fn feature(&self, row: usize, col: usize) -> Option<f64>;
    fn target_value(&self, row: usize) -> Option<f64>;

    fn feature_name(&self, col: usize) -> String {
        format!("feature {col}")
    }
}

/// Ordered timestamped observations.
///
/// `features` is row-major `n × d` where `d` counts numeric columns plus one
/// code column per encoded categorical column, in file column order.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    columns: Vec<ColumnSpec>,
    feature_names: Vec<String>,
    timestamps: Vec<Timestamp>,
    features: Vec<Option<f64>>,
    target: Vec<Option<f64>>,
    categorical: Vec<Option<u32>>,
}

impl TimeSeriesDataset {
    pub fn new(
        columns: Vec<ColumnSpec>,
        feature_names: Vec<String>,
        timestamps: Vec<Timestamp>,
        features: Vec<Option<f64>>,
        target: Vec<Option<f64>>,
        categorical: Vec<Option<u32>>,
    ) -> Result<Self, DataError> {
        let n = timestamps.len();
        let d = feature_names.len();
        if features.len() != n * d {
            return Err(DataError::Inconsistent(format!(
                "feature matrix has {} cells, expected {n}×{d}",
                features.len()
            )));
        }
        if target.len() != n {
            return Err(DataError::Inconsistent(format!(
                "target has {} entries, expected {n}",
                target.len()
            )));
        }
        if !categorical.is_empty() && categorical.len() != n {
            return Err(DataError::Inconsistent(format!(
                "categorical codes have {} entries, expected {n}",
                categorical.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[0] > w[1]) {
            return Err(DataError::Inconsistent("timestamps are not sorted".into()));
        }
        Ok(TimeSeriesDataset {
            columns,
            feature_names,
            timestamps,
            features,
            target,
            categorical,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn target(&self) -> &[Option<f64>] {
        &self.target
    }

    /// Codes of the first categorical column (empty when there is none).
    pub fn categorical(&self) -> &[Option<u32>] {
        &self.categorical
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let d = self.width();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        let d = self.width();
        (0..self.len()).map(move |i| self.features[i * d + j])
    }

    /// Row as a dense vector; `None` if any cell is missing.
    pub fn dense_row(&self, i: usize) -> Option<Vec<f64>> {
        self.row(i).iter().copied().collect()
    }

    pub(crate) fn features_mut(&mut self) -> &mut [Option<f64>] {
        &mut self.features
    }

    /// Number of missing cells per feature column.
    pub fn missing_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.width()];
        for row in self.features.chunks(self.width().max(1)) {
            for (c, v) in counts.iter_mut().zip(row) {
                if v.is_none() {
                    *c += 1;
                }
            }
        }
        counts
    }

    /// Rows selected by `rows`, kept in the given order.
    pub fn slice(&self, rows: &[usize]) -> Result<Self, DataError> {
        let n = self.len();
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(DataError::IndexOutOfRange { index: bad, len: n });
        }
        let d = self.width();
        let mut features = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        let pick_cat = |i: usize| self.categorical.get(i).copied().flatten();
        Ok(TimeSeriesDataset {
            columns: self.columns.clone(),
            feature_names: self.feature_names.clone(),
            timestamps: rows.iter().map(|&i| self.timestamps[i]).collect(),
            features,
            target: rows.iter().map(|&i| self.target[i]).collect(),
            categorical: if self.categorical.is_empty() {
                Vec::new()
            } else {
                rows.iter().map(|&i| pick_cat(i)).collect()
            },
        })
    }

    /// Keep only the listed feature columns, in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Result<Self, DataError> {
        let d = self.width();
        if let Some(&bad) = cols.iter().find(|&&j| j >= d) {
            return Err(DataError::IndexOutOfRange { index: bad, len: d });
        }
        let mut features = Vec::with_capacity(self.len() * cols.len());
        for i in 0..self.len() {
            let row = self.row(i);
            features.extend(cols.iter().map(|&j| row[j]));
        }
        let feature_names: Vec<String> = cols
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        let columns = self
            .columns
            .iter()
            .filter(|c| {
                matches!(c.kind, ColumnKind::Timestamp | ColumnKind::Target)
                    || feature_names.contains(&c.name)
            })
            .cloned()
            .collect();
        Ok(TimeSeriesDataset {
            columns,
            feature_names,
            timestamps: self.timestamps.clone(),
            features,
            target: self.target.clone(),
            categorical: self.categorical.clone(),
        })
    }

    /// Replace the feature block, keeping timestamps and target.
    pub fn with_features(
        &self,
        feature_names: Vec<String>,
        features: Vec<Option<f64>>,
    ) -> Result<Self, DataError> {
        if features.len() != self.len() * feature_names.len() {
            return Err(DataError::Inconsistent(format!(
                "replacement features have {} cells, expected {}×{}",
                features.len(),
                self.len(),
                feature_names.len()
            )));
        }
        let mut columns: Vec<ColumnSpec> = self
            .columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Timestamp | ColumnKind::Target))
            .cloned()
            .collect();
        columns.extend(
            feature_names
                .iter()
                .map(|n| ColumnSpec::new(n.clone(), ColumnKind::Numeric)),
        );
        Ok(TimeSeriesDataset {
            columns,
            feature_names,
            timestamps: self.timestamps.clone(),
            features,
            target: self.target.clone(),
            categorical: Vec::new(),
        })
    }

    /// Drop rows whose target is missing. Such rows can neither be trained on
    /// nor scored.
    pub fn drop_rows_without_target(&self) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.target[i].is_some())
            .collect();
        self.slice(&keep).expect("indices are in range")
    }

    /// Append the rows of `other` (same feature layout) and restore time
    /// order. Returns the merged dataset and, for every merged row, whether it
    /// came from `other`.
    pub fn merge(&self, other: &Self) -> Result<(Self, Vec<bool>), DataError> {
        if self.feature_names != other.feature_names {
            return Err(DataError::Inconsistent(
                "datasets have different feature columns".into(),
            ));
        }
        let total = self.len() + other.len();
        let mut order: Vec<(Timestamp, bool, usize)> = (0..self.len())
            .map(|i| (self.timestamps[i], false, i))
            .chain((0..other.len()).map(|i| (other.timestamps[i], true, i)))
            .collect();
        order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let d = self.width();
        let mut features = Vec::with_capacity(total * d);
        let mut timestamps = Vec::with_capacity(total);
        let mut target = Vec::with_capacity(total);
        let mut categorical = Vec::new();
        let keep_cat = !self.categorical.is_empty() && !other.categorical.is_empty();
        let mut from_other = Vec::with_capacity(total);
        for (ts, is_other, i) in order {
            let src = if is_other { other } else { self };
            timestamps.push(ts);
            features.extend_from_slice(src.row(i));
            target.push(src.target[i]);
            if keep_cat {
                categorical.push(src.categorical[i]);
            }
            from_other.push(is_other);
        }
        let merged = TimeSeriesDataset {
            columns: self.columns.clone(),
            feature_names: self.feature_names.clone(),
            timestamps,
            features,
            target,
            categorical,
        };
        Ok((merged, from_other))
    }
}

impl FeatureSource for TimeSeriesDataset {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn n_features(&self) -> usize {
        self.width()
    }

    fn feature(&self, row: usize, col: usize) -> Option<f64> {
        self.features[row * self.width() + col]
    }

    fn target_value(&self, row: usize) -> Option<f64> {
        self.target[row]
    }

    fn feature_name(&self, col: usize) -> String {
        self.feature_names[col].clone()
    }
}

/// Slice `ds` to `rows`, preserving column specs and the given row order.
pub fn dataset_slice(
    ds: &TimeSeriesDataset,
    rows: &[usize],
) -> Result<TimeSeriesDataset, DataError> {
    ds.slice(rows)
}

/// One emitted prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub timestamp: Timestamp,
    pub raw: f64,
    /// Non-negative multiple of 5.
    pub quantized: f64,
    pub truth: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn toy(n: usize) -> TimeSeriesDataset {
        let start = ts("2021-01-30 06:23:06");
        let timestamps = (0..n)
            .map(|i| start.offset_seconds(60 * i as i64).unwrap())
            .collect();
        let features = (0..n * 2).map(|i| Some(i as f64)).collect();
        let target = (0..n).map(|i| Some(5.0 * i as f64)).collect();
        TimeSeriesDataset::new(
            vec![
                ColumnSpec::new("timestamp", ColumnKind::Timestamp),
                ColumnSpec::new("a", ColumnKind::Numeric),
                ColumnSpec::new("b", ColumnKind::Numeric),
                ColumnSpec::new("target", ColumnKind::Target),
            ],
            vec!["a".into(), "b".into()],
            timestamps,
            features,
            target,
            Vec::new(),
        )
        .unwrap()
    }

    #[test]
    fn timestamp_round_trip() {
        let t = ts("2021-01-30 06:23:06");
        assert_eq!(t.to_string(), "2021-01-30 06:23:06");
        assert!(t < ts("2021-07-24 06:29:00"));
        assert_eq!(Timestamp::from_unix_seconds(t.unix_seconds()), Some(t));
        assert!("2021-01-30T06:23:06".parse::<Timestamp>().is_err());
    }

    #[test]
    fn slice_keeps_metadata() {
        let ds = toy(5);
        let s = dataset_slice(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.columns(), ds.columns());
        assert_eq!(s.row(2), ds.row(2));
    }

    #[test]
    fn slice_all_is_identity() {
        let ds = toy(5);
        assert_eq!(dataset_slice(&ds, &[0, 1, 2, 3, 4]).unwrap(), ds);
    }

    #[test]
    fn slice_out_of_range() {
        let ds = toy(5);
        assert_eq!(
            dataset_slice(&ds, &[99]),
            Err(DataError::IndexOutOfRange { index: 99, len: 5 })
        );
    }

    #[test]
    fn slice_composes() {
        let ds = toy(6);
        let a = [1, 2, 4, 5];
        let b = [0, 2, 3];
        let twice = ds.slice(&a).unwrap().slice(&b).unwrap();
        let composed: Vec<usize> = b.iter().map(|&i| a[i]).collect();
        assert_eq!(twice, ds.slice(&composed).unwrap());
    }

    #[test]
    fn schema_parsing() {
        let s = parse_schema("name,kind\ntimestamp,timestamp\n# comment\nx,numeric\nmode,categorical\ny_var,target\n")
            .unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[2].kind, ColumnKind::Categorical);
        assert!(parse_schema("t,timestamp\nx,numeric\n").is_err());
        assert!(parse_schema("t,timestamp\ny,target\ny,numeric\n").is_err());
        assert!(parse_schema("t,timestamp\ny,target\nx,weird\n").is_err());
    }

    #[test]
    fn unsorted_construction_rejected() {
        let ds = toy(3);
        let mut ts = ds.timestamps().to_vec();
        ts.reverse();
        let r = TimeSeriesDataset::new(
            ds.columns().to_vec(),
            ds.feature_names().to_vec(),
            ts,
            (0..6).map(|i| Some(i as f64)).collect(),
            vec![None; 3],
            Vec::new(),
        );
        assert!(r.is_err());
    }
}
