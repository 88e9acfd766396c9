use super::{RidgeConfig, RidgeError};

/// Ridge fit kept current by Sherman–Morrison updates of `(Gc + αI)⁻¹`.
///
/// Adding a row changes the centered Gram matrix by the rank-one term
/// `n/(n+1)·(x − x̄)(x − x̄)ᵀ`, so the inverse can be corrected in `O(d²)`
/// instead of refactored in `O(d³)`. Requires `alpha > 0` (the recursion
/// starts from `I/α`) and an intercept.
#[derive(Debug, Clone)]
pub struct RankOneRidge {
    d: usize,
    alpha: f64,
    inverse: Vec<f64>,
    cross: Vec<f64>,
    mean_x: Vec<f64>,
    mean_y: f64,
    count: u64,
}

impl RankOneRidge {
    pub fn new(d: usize, config: RidgeConfig) -> Result<Self, RidgeError> {
        config.validate()?;
        if config.alpha <= 0.0 || !config.fit_intercept {
            return Err(RidgeError::InvalidConfig(
                "rank-one updates need alpha > 0 and an intercept".into(),
            ));
        }
        let mut inverse = vec![0.0; d * d];
        for j in 0..d {
            inverse[j * d + j] = 1.0 / config.alpha;
        }
        Ok(RankOneRidge {
            d,
            alpha: config.alpha,
            inverse,
            cross: vec![0.0; d],
            mean_x: vec![0.0; d],
            mean_y: 0.0,
            count: 0,
        })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<(), RidgeError> {
        let d = self.d;
        if x.len() != d {
            return Err(RidgeError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(RidgeError::NonFiniteInput);
        }
        let n = self.count as f64;
        let dx: Vec<f64> = x.iter().zip(&self.mean_x).map(|(a, m)| a - m).collect();
        let dy = y - self.mean_y;
        if self.count > 0 {
            let f = n / (n + 1.0);
            for (c, &e) in self.cross.iter_mut().zip(&dx) {
                *c += f * e * dy;
            }
            let u: Vec<f64> = dx.iter().map(|e| e * f.sqrt()).collect();
            let au: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|k| self.inverse[i * d + k] * u[k]).sum())
                .collect();
            let denom = 1.0 + u.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..d {
                for k in 0..d {
                    self.inverse[i * d + k] -= au[i] * au[k] / denom;
                }
            }
        }
        for (m, e) in self.mean_x.iter_mut().zip(&dx) {
            *m += e / (n + 1.0);
        }
        self.mean_y += dy / (n + 1.0);
        self.count += 1;
        Ok(())
    }

    /// Current `(coefficients, intercept)`.
    pub fn solution(&self) -> Result<(Vec<f64>, f64), RidgeError> {
        if self.count == 0 {
            return Err(RidgeError::InsufficientData);
        }
        let d = self.d;
        let w: Vec<f64> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| self.inverse[i * d + k] * self.cross[k])
                    .sum()
            })
            .collect();
        let b = self.mean_y - w.iter().zip(&self.mean_x).map(|(a, m)| a * m).sum::<f64>();
        Ok((w, b))
    }
}
