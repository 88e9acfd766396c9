//! Reference implementations kept deliberately separate from the library:
//! dense matrices, explicit centering and Gaussian elimination.
#![allow(dead_code)]

use prqr_core::data_model::{ColumnKind, ColumnSpec, TimeSeriesDataset, Timestamp};
use prqr_core::rng::SplitMix64;

/// Gaussian elimination with partial pivoting on a dense copy of `a`.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        assert!(m[col][col].abs() > 1e-300, "oracle: singular system");
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let pivot_row = m[col].clone();
            for (dst, src) in m[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Ridge with unpenalized intercept: centre X and y explicitly, then solve
/// `(XcᵀXc + αI) w = Xcᵀyc`.
pub fn ridge_oracle(x: &[Vec<f64>], y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mx: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let my = y.iter().sum::<f64>() / n;
    let xc: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mx).map(|(a, m)| a - m).collect())
        .collect();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (r, &yi) in xc.iter().zip(y) {
        for j in 0..d {
            for k in 0..d {
                a[j][k] += r[j] * r[k];
            }
            b[j] += r[j] * (yi - my);
        }
    }
    for (j, row) in a.iter_mut().enumerate() {
        row[j] += alpha;
    }
    let w = gauss_solve(&a, &b);
    let b0 = my - w.iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>();
    (w, b0)
}

/// Ridge on features standardized with their population mean and stddev,
/// mapped back to input space. Constant columns get weight 0.
pub fn scaled_ridge_oracle(x: &[Vec<f64>], y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let live: Vec<usize> = (0..d)
        .filter(|&j| sd[j] > 1e-12 * (1.0 + mean[j].abs()))
        .collect();
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| live.iter().map(|&j| (r[j] - mean[j]) / sd[j]).collect())
        .collect();
    let (wz, b0) = ridge_oracle(&z, y, alpha);
    let mut w = vec![0.0; d];
    let mut b = b0;
    for (k, &j) in live.iter().enumerate() {
        w[j] = wz[k] / sd[j];
        b -= w[j] * mean[j];
    }
    (w, b)
}

/// `‖y − Xw − b‖² + α‖w‖²` with `b` the optimal intercept for `w`.
pub fn ridge_objective(x: &[Vec<f64>], y: &[f64], w: &[f64], alpha: f64) -> f64 {
    let n = x.len() as f64;
    let r: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(row, yi)| yi - row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let b = r.iter().sum::<f64>() / n;
    r.iter().map(|e| (e - b).powi(2)).sum::<f64>() + alpha * w.iter().map(|v| v * v).sum::<f64>()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random regression problem `y = Xβ + c + σ·ε` with standard-normal X.
pub fn random_problem(
    rng: &mut SplitMix64,
    n: usize,
    d: usize,
    sigma: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let beta: Vec<f64> = (0..d).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
    let c = 10.0 * rng.next_f64();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| 3.0 * rng.next_gaussian() + 1.0).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| {
            r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + c + sigma * rng.next_gaussian()
        })
        .collect();
    (x, y)
}

/// Dataset from explicit second offsets, dense features and targets.
pub fn dataset(secs: &[i64], x: &[Vec<f64>], y: &[f64]) -> TimeSeriesDataset {
    let d = x.first().map_or(0, Vec::len);
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let mut cols = vec![ColumnSpec::new("timestamp", ColumnKind::Timestamp)];
    cols.extend(
        names
            .iter()
            .map(|n| ColumnSpec::new(n.clone(), ColumnKind::Numeric)),
    );
    cols.push(ColumnSpec::new("target", ColumnKind::Target));
    let ts = secs
        .iter()
        .map(|&s| Timestamp::from_unix_seconds(1_600_000_000 + s).unwrap())
        .collect();
    let feats = x.iter().flatten().map(|&v| Some(v)).collect();
    TimeSeriesDataset::new(
        cols,
        names,
        ts,
        feats,
        y.iter().map(|&v| Some(v)).collect(),
        Vec::new(),
    )
    .unwrap()
}
