//! Closed-form ridge regression over incrementally accumulated sufficient
//! statistics.
//!
//! Rows are absorbed into raw (uncentered, unscaled) accumulators. Centering
//! and standardization are applied algebraically at solve time, so the
//! scaler can be refit at any point without touching absorbed rows, and a
//! solve after streaming `n` rows is identical in exact arithmetic to a batch
//! fit on those rows.

mod persist;
mod rank_one;

pub use persist::{
    decode_state, encode_state, load_state, save_state, PersistError, FORMAT_VERSION, MAGIC,
};
pub use rank_one::RankOneRidge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ScalerStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RidgeError {
    #[error("dimension mismatch: model has {expected} features, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("no rows absorbed")]
    InsufficientData,
    #[error("normal equations are singular (alpha = 0 with rank-deficient design)")]
    SingularSystem,
    #[error("model has absorbed rows since the last solve")]
    StaleModel,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    /// L2 penalty; 0 gives ordinary least squares.
    pub alpha: f64,
    pub fit_intercept: bool,
}

impl RidgeConfig {
    pub fn new(alpha: f64) -> Self {
        RidgeConfig {
            alpha,
            fit_intercept: true,
        }
    }

    pub fn validate(&self) -> Result<(), RidgeError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(RidgeError::InvalidConfig(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig::new(2.0)
    }
}

/// Accumulators from which the ridge solution is exactly recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    d: usize,
    /// Row-major `d × d`, Σ x xᵀ.
    pub gram: Vec<f64>,
    /// Σ x·y.
    pub moment: Vec<f64>,
    pub sum_x: Vec<f64>,
    pub sum_y: f64,
    pub count: u64,
}

impl SuffStats {
    pub fn new(d: usize) -> Self {
        SuffStats {
            d,
            gram: vec![0.0; d * d],
            moment: vec![0.0; d],
            sum_x: vec![0.0; d],
            sum_y: 0.0,
            count: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.d
    }

    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<(), RidgeError> {
        if x.len() != self.d {
            return Err(RidgeError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(RidgeError::NonFiniteInput);
        }
        let d = self.d;
        for (j, &xj) in x.iter().enumerate() {
            let row = &mut self.gram[j * d..(j + 1) * d];
            for (g, &xk) in row.iter_mut().zip(x) {
                *g += xj * xk;
            }
            self.moment[j] += xj * y;
            self.sum_x[j] += xj;
        }
        self.sum_y += y;
        self.count += 1;
        Ok(())
    }

    fn g(&self, j: usize, k: usize) -> f64 {
        self.gram[j * self.d + k]
    }
}

/// Fitted or accumulating ridge model.
///
/// `coefficients` live in the standardized feature space defined by
/// `scaler`; with an identity scaler they are plain input-space weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModelState {
    pub config: RidgeConfig,
    pub stats: SuffStats,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub scaler: ScalerStats,
    dirty: bool,
    /// Returned by `predict` while no rows have been absorbed.
    pub fallback: f64,
}

/// Output of [`RidgeModelState::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// The model had no data and returned its fallback constant.
    pub fallback: bool,
}

impl RidgeModelState {
    pub fn new(d: usize, config: RidgeConfig) -> Result<Self, RidgeError> {
        config.validate()?;
        Ok(RidgeModelState {
            config,
            stats: SuffStats::new(d),
            coefficients: vec![0.0; d],
            intercept: 0.0,
            scaler: ScalerStats::identity(d),
            dirty: false,
            fallback: 0.0,
        })
    }

    /// Assemble a state from stored parts; it starts dirty.
    pub fn from_parts(
        config: RidgeConfig,
        stats: SuffStats,
        scaler: ScalerStats,
        coefficients: Vec<f64>,
        intercept: f64,
    ) -> Self {
        RidgeModelState {
            config,
            stats,
            coefficients,
            intercept,
            scaler,
            dirty: true,
            fallback: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.stats.width()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub(crate) fn mark_clean(&mut self) {
        self.dirty = false;
    }

    pub fn absorb_row(&mut self, x: &[f64], y: f64) -> Result<(), RidgeError> {
        self.stats.absorb(x, y)?;
        self.dirty = true;
        Ok(())
    }

    /// Discard absorbed rows, keeping configuration and scaler.
    pub fn reset_stats(&mut self) {
        self.stats = SuffStats::new(self.width());
        self.dirty = true;
    }

    pub fn set_scaler(&mut self, scaler: ScalerStats) -> Result<(), RidgeError> {
        if scaler.width() != self.width() || scaler.stddev.len() != self.width() {
            return Err(RidgeError::DimensionMismatch {
                expected: self.width(),
                got: scaler.width(),
            });
        }
        if scaler != self.scaler {
            self.scaler = scaler;
            self.dirty = true;
        }
        Ok(())
    }

    /// Population mean and stddev of the absorbed rows, from the
    /// accumulators alone.
    pub fn stats_scaler(&self) -> Result<ScalerStats, RidgeError> {
        if self.stats.count == 0 {
            return Err(RidgeError::InsufficientData);
        }
        let n = self.stats.count as f64;
        let d = self.width();
        let mean: Vec<f64> = self.stats.sum_x.iter().map(|s| s / n).collect();
        let stddev = (0..d)
            .map(|j| {
                let var = self.stats.g(j, j) / n - mean[j] * mean[j];
                // Relative floor: cancellation noise on a constant column.
                let scale = self.stats.g(j, j) / n;
                if var <= scale * 1e-13 {
                    0.0
                } else {
                    var.sqrt()
                }
            })
            .collect();
        Ok(ScalerStats { mean, stddev })
    }

    fn inv_sd(&self) -> Vec<f64> {
        self.scaler
            .stddev
            .iter()
            .map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 })
            .collect()
    }

    /// Solve the penalized normal equations for the absorbed rows.
    ///
    /// With intercept: `(Gc + αI) w = bc` on centered statistics
    /// `Gc = G − s sᵀ/n`, `bc = b − s Σy/n` (each side rescaled by the
    /// scaler's inverse standard deviations), and the intercept is never
    /// penalized. Without intercept the uncentered system is solved.
    pub fn solve(&mut self) -> Result<(), RidgeError> {
        self.config.validate()?;
        let st = &self.stats;
        if st.count == 0 {
            return Err(RidgeError::InsufficientData);
        }
        let d = self.width();
        let n = st.count as f64;
        let inv = self.inv_sd();
        let mu = &self.scaler.mean;
        let active: Vec<usize> = (0..d).filter(|&j| inv[j] != 0.0).collect();
        let m = active.len();

        let mut a = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (p, &j) in active.iter().enumerate() {
            for (q, &k) in active.iter().enumerate() {
                let g = if self.config.fit_intercept {
                    st.g(j, k) - st.sum_x[j] * st.sum_x[k] / n
                } else {
                    st.g(j, k) - mu[j] * st.sum_x[k] - st.sum_x[j] * mu[k] + n * mu[j] * mu[k]
                };
                a[p * m + q] = inv[j] * g * inv[k];
            }
            a[p * m + p] += self.config.alpha;
            let b = if self.config.fit_intercept {
                st.moment[j] - st.sum_x[j] * st.sum_y / n
            } else {
                st.moment[j] - mu[j] * st.sum_y
            };
            rhs[p] = inv[j] * b;
        }
        let w_active = cholesky_solve(&mut a, &mut rhs, m, self.config.alpha == 0.0)?;

        let mut w = vec![0.0; d];
        for (p, &j) in active.iter().enumerate() {
            w[j] = w_active[p];
        }
        let intercept = if self.config.fit_intercept {
            let shifted: f64 = (0..d)
                .map(|j| w[j] * inv[j] * (st.sum_x[j] - n * mu[j]))
                .sum();
            (st.sum_y - shifted) / n
        } else {
            0.0
        };
        self.coefficients = w;
        self.intercept = intercept;
        self.dirty = false;
        Ok(())
    }

    /// `wᵀ·scale(x) + intercept`, or the fallback while empty.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, RidgeError> {
        let d = self.width();
        if x.len() != d {
            return Err(RidgeError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if self.stats.count == 0 {
            return Ok(Prediction {
                value: self.fallback,
                fallback: true,
            });
        }
        if self.dirty {
            return Err(RidgeError::StaleModel);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RidgeError::NonFiniteInput);
        }
        let value = self.intercept
            + (0..d)
                .map(|j| self.coefficients[j] * self.scaler.scale(j, x[j]))
                .sum::<f64>();
        Ok(Prediction {
            value,
            fallback: false,
        })
    }

    /// The fitted model as plain input-space weights and intercept.
    pub fn input_space_model(&self) -> (Vec<f64>, f64) {
        let inv = self.inv_sd();
        let w: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&inv)
            .map(|(c, s)| c * s)
            .collect();
        let shift: f64 = w.iter().zip(&self.scaler.mean).map(|(w, m)| w * m).sum();
        (w, self.intercept - shift)
    }
}

/// Solve `A x = b` for symmetric positive-definite `A` (row-major `m × m`,
/// overwritten by its Cholesky factor). `strict` flags near-zero pivots as
/// singular; otherwise only non-positive pivots are.
fn cholesky_solve(
    a: &mut [f64],
    b: &mut [f64],
    m: usize,
    strict: bool,
) -> Result<Vec<f64>, RidgeError> {
    let max_diag = (0..m).map(|i| a[i * m + i].abs()).fold(0.0, f64::max);
    let tol = if strict { max_diag * 1e-12 } else { 0.0 };
    for j in 0..m {
        let mut diag = a[j * m + j];
        for k in 0..j {
            diag -= a[j * m + k] * a[j * m + k];
        }
        if diag.is_nan() || diag <= tol {
            return Err(RidgeError::SingularSystem);
        }
        let l_jj = diag.sqrt();
        a[j * m + j] = l_jj;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / l_jj;
        }
    }
    // L z = b
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * m + k] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    // Lᵀ x = z
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= a[k * m + i] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    Ok(b.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted(xs: &[&[f64]], ys: &[f64], alpha: f64) -> RidgeModelState {
        let mut s = RidgeModelState::new(xs[0].len(), RidgeConfig::new(alpha)).unwrap();
        for (x, &y) in xs.iter().zip(ys) {
            s.absorb_row(x, y).unwrap();
        }
        s.solve().unwrap();
        s
    }

    #[test]
    fn absorb_accumulates() {
        let mut s = RidgeModelState::new(2, RidgeConfig::new(1.0)).unwrap();
        s.absorb_row(&[1.0, 0.0], 2.0).unwrap();
        assert_eq!(s.stats.gram, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.stats.moment, vec![2.0, 0.0]);
        assert_eq!(s.stats.count, 1);
        assert!(s.is_dirty());
        assert_eq!(
            s.absorb_row(&[f64::NAN, 0.0], 1.0),
            Err(RidgeError::NonFiniteInput)
        );
        assert_eq!(
            s.absorb_row(&[1.0], 1.0),
            Err(RidgeError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn exact_line() {
        let s = fitted(&[&[1.0], &[2.0], &[3.0]], &[2.0, 4.0, 6.0], 0.0);
        assert!((s.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(s.intercept.abs() < 1e-12);
        assert!((s.predict(&[3.0]).unwrap().value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_gives_mean() {
        let s = fitted(&[&[1.0], &[2.0], &[3.0]], &[2.0, 4.0, 6.0], 1e9);
        assert!(s.coefficients[0].abs() < 1e-3);
        assert!((s.intercept - 4.0).abs() < 1e-6);
    }

    #[test]
    fn predict_contract() {
        let mut s = RidgeModelState::new(1, RidgeConfig::new(1.0)).unwrap();
        let p = s.predict(&[3.0]).unwrap();
        assert_eq!(
            p,
            Prediction {
                value: 0.0,
                fallback: true
            }
        );
        s.absorb_row(&[1.0], 1.0).unwrap();
        assert_eq!(s.predict(&[3.0]), Err(RidgeError::StaleModel));
        assert_eq!(s.solve(), Ok(()));
        assert_eq!(
            s.predict(&[1.0, 2.0]),
            Err(RidgeError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        );

        let mut m = RidgeModelState::new(1, RidgeConfig::new(0.0)).unwrap();
        m.coefficients = vec![2.0];
        m.absorb_row(&[3.0], 6.0).unwrap();
        m.mark_clean();
        assert_eq!(m.predict(&[3.0]).unwrap().value, 6.0);
    }

    #[test]
    fn solve_errors() {
        let mut s = RidgeModelState::new(2, RidgeConfig::new(0.0)).unwrap();
        assert_eq!(s.solve(), Err(RidgeError::InsufficientData));
        // Second column is a copy of the first: rank deficient.
        for i in 0..5 {
            let v = i as f64;
            s.absorb_row(&[v, v], 2.0 * v).unwrap();
        }
        assert_eq!(s.solve(), Err(RidgeError::SingularSystem));
        s.config.alpha = 0.5;
        assert_eq!(s.solve(), Ok(()));
        assert!(RidgeModelState::new(1, RidgeConfig::new(-1.0)).is_err());
    }

    #[test]
    fn scaled_solution_matches_explicitly_scaled_data() {
        let xs: Vec<[f64; 2]> = (0..12)
            .map(|i| {
                let t = i as f64;
                [3.0 + 2.0 * t, 100.0 - 0.5 * (t * 1.7).sin() * 10.0]
            })
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x[0] - 0.2 * x[1] + 4.0).collect();

        let mut raw = RidgeModelState::new(2, RidgeConfig::new(0.8)).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            raw.absorb_row(x, y).unwrap();
        }
        let scaler = raw.stats_scaler().unwrap();
        raw.set_scaler(scaler.clone()).unwrap();
        raw.solve().unwrap();

        let mut explicit = RidgeModelState::new(2, RidgeConfig::new(0.8)).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            let z = [scaler.scale(0, x[0]), scaler.scale(1, x[1])];
            explicit.absorb_row(&z, y).unwrap();
        }
        explicit.solve().unwrap();
        for j in 0..2 {
            assert!((raw.coefficients[j] - explicit.coefficients[j]).abs() < 1e-9);
        }
        assert!((raw.intercept - explicit.intercept).abs() < 1e-9);

        let x = [7.0, 95.0];
        let z = [scaler.scale(0, x[0]), scaler.scale(1, x[1])];
        let a = raw.predict(&x).unwrap().value;
        let b = explicit.predict(&z).unwrap().value;
        assert!((a - b).abs() < 1e-9);
        let (w, c) = raw.input_space_model();
        assert!((w[0] * x[0] + w[1] * x[1] + c - a).abs() < 1e-9);
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let mut s = RidgeModelState::new(2, RidgeConfig::new(0.0)).unwrap();
        for i in 0..6 {
            let v = i as f64;
            s.absorb_row(&[v, 3.0], 2.0 * v + 1.0).unwrap();
        }
        let sc = s.stats_scaler().unwrap();
        assert_eq!(sc.stddev[1], 0.0);
        s.set_scaler(sc).unwrap();
        s.solve().unwrap();
        assert_eq!(s.coefficients[1], 0.0);
        assert!((s.predict(&[10.0, 3.0]).unwrap().value - 21.0).abs() < 1e-9);
    }

    #[test]
    fn no_intercept_through_origin() {
        let mut s = RidgeModelState::new(
            1,
            RidgeConfig {
                alpha: 0.0,
                fit_intercept: false,
            },
        )
        .unwrap();
        for (x, y) in [(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)] {
            s.absorb_row(&[x], y).unwrap();
        }
        s.solve().unwrap();
        // Σxy / Σx² = 34 / 14
        assert!((s.coefficients[0] - 34.0 / 14.0).abs() < 1e-12);
        assert_eq!(s.intercept, 0.0);
    }
}
