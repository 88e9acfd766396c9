//! Split plans, expanding-window folds and the prequential event schedule.
//!
//! The rule enforced throughout: a prediction for a row stamped `t` may only
//! see training rows stamped strictly before `t`. Rows sharing the
//! prediction's timestamp are excluded.

use std::fmt;
use std::io::{self, Read, Write};
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

use crate::data_model::Timestamp;
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("invalid split parameters: {0}")]
    InvalidArgument(String),
    #[error("split assigned no test rows")]
    DegenerateSplit,
    #[error("{t} is not the timestamp of any test row")]
    UnknownTestTimestamp { t: Timestamp },
    #[error("need at least {needed} rows for {k} folds, have {n}")]
    TooFewRows { n: usize, k: usize, needed: usize },
    #[error("plan covers {plan} rows but dataset has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("split plan file: {0}")]
    BadPlanFile(String),
}

/// Role of a row in a split plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Initial,
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Initial => "INITIAL",
            Role::Train => "TRAIN",
            Role::Test => "TEST",
        })
    }
}

impl FromStr for Role {
    type Err = TemporalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "INITIAL" => Ok(Role::Initial),
            "TRAIN" => Ok(Role::Train),
            "TEST" => Ok(Role::Test),
            other => Err(TemporalError::BadPlanFile(format!(
                "unknown role {other:?}"
            ))),
        }
    }
}

/// Assignment of every row to the initial training block or to the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    initial_train: Range<usize>,
    stream: Vec<(usize, Role)>,
}

impl SplitPlan {
    /// Build from explicit per-row roles. `Initial` rows must form a prefix.
    pub fn from_roles(roles: &[Role]) -> Result<Self, TemporalError> {
        let k = roles.iter().take_while(|&&r| r == Role::Initial).count();
        if roles[k..].contains(&Role::Initial) {
            return Err(TemporalError::BadPlanFile(
                "INITIAL rows must be a prefix of the time order".into(),
            ));
        }
        Ok(SplitPlan {
            initial_train: 0..k,
            stream: roles[k..]
                .iter()
                .enumerate()
                .map(|(i, &r)| (k + i, r))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.initial_train.len() + self.stream.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn initial_train(&self) -> Range<usize> {
        self.initial_train.clone()
    }

    pub fn stream(&self) -> &[(usize, Role)] {
        &self.stream
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Initial; self.initial_train.len()];
        roles.extend(self.stream.iter().map(|&(_, r)| r));
        roles
    }

    pub fn role(&self, row: usize) -> Option<Role> {
        if self.initial_train.contains(&row) {
            Some(Role::Initial)
        } else {
            self.stream
                .get(row - self.initial_train.len())
                .map(|&(_, r)| r)
        }
    }

    pub fn test_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.stream
            .iter()
            .filter(|(_, r)| *r == Role::Test)
            .map(|&(i, _)| i)
    }

    /// Initial and stream-train rows, in index order.
    pub fn training_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.initial_train.clone().chain(
            self.stream
                .iter()
                .filter(|(_, r)| *r == Role::Train)
                .map(|&(i, _)| i),
        )
    }

    /// Write as CSV `row_index,role`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "row_index,role")?;
        for (i, r) in self.roles().iter().enumerate() {
            writeln!(w, "{i},{r}")?;
        }
        Ok(())
    }
}

/// Parse a `row_index,role` CSV. Every index in `0..n` must appear exactly
/// once; lines may come in any order.
pub fn read_split_plan<R: Read>(reader: R) -> Result<SplitPlan, TemporalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let bad = |m: String| TemporalError::BadPlanFile(m);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() != 2 || header[0].trim() != "row_index" || header[1].trim() != "role" {
        return Err(bad("expected header `row_index,role`".into()));
    }
    let mut entries: Vec<(usize, Role)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad("expected two fields per line".into()));
        }
        let idx = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("bad row index {:?}", &rec[0])))?;
        entries.push((idx, rec[1].parse()?));
    }
    let n = entries.len();
    let mut roles: Vec<Option<Role>> = vec![None; n];
    for (idx, role) in entries {
        let slot = roles
            .get_mut(idx)
            .ok_or_else(|| bad(format!("row index {idx} out of range for {n} rows")))?;
        if slot.replace(role).is_some() {
            return Err(bad(format!("row index {idx} listed twice")));
        }
    }
    // Indices are in range and unique, so all slots are filled.
    let roles: Vec<Role> = roles.into_iter().map(Option::unwrap).collect();
    SplitPlan::from_roles(&roles)
}

/// Initial block is the first `⌊initial_fraction·n⌋` rows; every later row is
/// a test row with probability `test_fraction` under the seeded generator.
pub fn make_split_plan(
    n: usize,
    initial_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitPlan, TemporalError> {
    if n < 2 {
        return Err(TemporalError::InvalidArgument(format!(
            "need n >= 2, got {n}"
        )));
    }
    for (name, f) in [
        ("initial_fraction", initial_fraction),
        ("test_fraction", test_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(TemporalError::InvalidArgument(format!(
                "{name} must lie in (0, 1), got {f}"
            )));
        }
    }
    let k = (initial_fraction * n as f64).floor() as usize;
    let mut rng = SplitMix64::new(seed);
    let stream: Vec<(usize, Role)> = (k..n)
        .map(|i| {
            let role = if rng.next_f64() < test_fraction {
                Role::Test
            } else {
                Role::Train
            };
            (i, role)
        })
        .collect();
    if !stream.iter().any(|(_, r)| *r == Role::Test) {
        return Err(TemporalError::DegenerateSplit);
    }
    Ok(SplitPlan {
        initial_train: 0..k,
        stream,
    })
}

fn check_len(plan: &SplitPlan, timestamps: &[Timestamp]) -> Result<(), TemporalError> {
    if plan.len() != timestamps.len() {
        return Err(TemporalError::PlanMismatch {
            plan: plan.len(),
            data: timestamps.len(),
        });
    }
    Ok(())
}

/// Training rows (initial or stream-train) stamped strictly before `t`.
pub fn admissible_training_rows(
    timestamps: &[Timestamp],
    plan: &SplitPlan,
    t: Timestamp,
) -> Result<Vec<usize>, TemporalError> {
    check_len(plan, timestamps)?;
    if !plan.test_rows().any(|i| timestamps[i] == t) {
        return Err(TemporalError::UnknownTestTimestamp { t });
    }
    Ok(plan
        .training_rows()
        .filter(|&i| timestamps[i] < t)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleEvent {
    RetrainAt(usize),
    PredictAt(usize),
}

/// Interleave training and test rows in time order. A training row is
/// released only before test rows stamped strictly later than it; at equal
/// timestamps the prediction goes first. Training rows after the last test
/// row are still emitted so the final model has seen all of them.
pub fn prequential_schedule(
    plan: &SplitPlan,
    timestamps: &[Timestamp],
) -> Result<Vec<ScheduleEvent>, TemporalError> {
    check_len(plan, timestamps)?;
    let mut train: Vec<usize> = plan.training_rows().collect();
    let mut test: Vec<usize> = plan.test_rows().collect();
    train.sort_by_key(|&i| (timestamps[i], i));
    test.sort_by_key(|&i| (timestamps[i], i));
    let mut events = Vec::with_capacity(plan.len());
    let mut next = 0;
    for &p in &test {
        while next < train.len() && timestamps[train[next]] < timestamps[p] {
            events.push(ScheduleEvent::RetrainAt(train[next]));
            next += 1;
        }
        events.push(ScheduleEvent::PredictAt(p));
    }
    events.extend(train[next..].iter().map(|&i| ScheduleEvent::RetrainAt(i)));
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvFold {
    /// Training rows are `0..train_end`.
    pub train_end: usize,
    pub validation: Range<usize>,
}

/// Expanding-window folds over `k` time-ordered blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub folds: Vec<CvFold>,
}

/// Split `0..n` into `k` equal blocks (the last takes the remainder). Fold
/// `i` trains on blocks `0..=i` and validates on block `i + 1`, giving
/// `k - 1` scored folds.
pub fn make_cv_plan(n: usize, k: usize) -> Result<CvPlan, TemporalError> {
    if k < 2 {
        return Err(TemporalError::InvalidArgument(format!(
            "need k >= 2, got {k}"
        )));
    }
    let needed = k.saturating_mul(2);
    if n < needed {
        return Err(TemporalError::TooFewRows { n, k, needed });
    }
    let b = n / k;
    let folds = (1..k)
        .map(|i| CvFold {
            train_end: i * b,
            validation: i * b..if i == k - 1 { n } else { (i + 1) * b },
        })
        .collect();
    Ok(CvPlan { folds })
}

impl CvPlan {
    /// Training rows of `fold` stamped strictly before its first validation
    /// row. Equals `0..train_end` unless timestamps tie across the boundary.
    pub fn causal_training_rows(&self, fold: usize, timestamps: &[Timestamp]) -> Vec<usize> {
        let f = &self.folds[fold];
        let first = timestamps[f.validation.start];
        (0..f.train_end)
            .filter(|&i| timestamps[i] < first)
            .collect()
    }
}
