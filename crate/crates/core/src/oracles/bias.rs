use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};

/// Bias/variance envelope of a smoothed oracle:
/// `||bias|| <= b1 / lambda + b2 lambda` and second moment `<= b3 / lambda^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// One row of a lambda sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub bias_norm: f64,
    pub second_moment: f64,
}

impl BiasModel {
    /// Zero coefficients are allowed and describe an unbiased (or noiseless) oracle.
    pub fn new(b1: f64, b2: f64, b3: f64) -> Result<Self> {
        for (name, v) in [("b1", b1), ("b2", b2), ("b3", b3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SriError::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(BiasModel { b1, b2, b3 })
    }

    pub fn epsilon(&self, lambda: f64) -> f64 {
        self.b1 / lambda + self.b2 * lambda
    }

    pub fn variance_bound(&self, lambda: f64) -> f64 {
        self.b3 / (lambda * lambda)
    }

    /// Minimizer `sqrt(b1 / b2)` of `epsilon`; needs both coefficients positive.
    pub fn lambda_star(&self) -> Option<f64> {
        (self.b1 > 0.0 && self.b2 > 0.0).then(|| (self.b1 / self.b2).sqrt())
    }

    /// `2 sqrt(b1 b2)`, the value of `epsilon` at `lambda_star`.
    pub fn min_epsilon(&self) -> f64 {
        2.0 * (self.b1 * self.b2).sqrt()
    }

    /// Fits `(b1, b2)` by relative nonnegative least squares on the sweep, then
    /// scales both up until the curve dominates every observed bias, so the
    /// result is an envelope rather than a central fit. `b3` is the smallest
    /// constant dominating `lambda^2 * second_moment` over the sweep.
    pub fn fit(sweep: &[SweepPoint]) -> Result<Self> {
        if sweep.len() < 2 {
            return Err(SriError::Domain(
                "bias fit needs at least two sweep points".into(),
            ));
        }
        if sweep
            .iter()
            .any(|p| !(p.lambda > 0.0 && p.bias_norm > 0.0 && p.second_moment >= 0.0))
        {
            return Err(SriError::Domain(
                "sweep points need lambda > 0, bias_norm > 0 and second_moment >= 0".into(),
            ));
        }
        // weights 1/y^2 make the fit relative
        let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in sweep {
            let w = 1.0 / (p.bias_norm * p.bias_norm);
            let (u, v) = (1.0 / p.lambda, p.lambda);
            s11 += w * u * u;
            s12 += w * u * v;
            s22 += w * v * v;
            r1 += w * u * p.bias_norm;
            r2 += w * v * p.bias_norm;
        }
        let sse = |b1: f64, b2: f64| -> f64 {
            sweep
                .iter()
                .map(|p| ((b1 / p.lambda + b2 * p.lambda - p.bias_norm) / p.bias_norm).powi(2))
                .sum()
        };
        let mut candidates = vec![(r1 / s11, 0.0), (0.0, r2 / s22)];
        let det = s11 * s22 - s12 * s12;
        if det.abs() > 1e-300 {
            let b1 = (r1 * s22 - r2 * s12) / det;
            let b2 = (s11 * r2 - s12 * r1) / det;
            if b1 >= 0.0 && b2 >= 0.0 {
                candidates.push((b1, b2));
            }
        }
        let (b1, b2) = candidates
            .into_iter()
            .min_by(|a, b| sse(a.0, a.1).total_cmp(&sse(b.0, b.1)))
            .expect("two candidates");
        let scale = sweep
            .iter()
            .map(|p| p.bias_norm / (b1 / p.lambda + b2 * p.lambda))
            .fold(1.0_f64, f64::max);
        let b3 = sweep
            .iter()
            .map(|p| p.lambda * p.lambda * p.second_moment)
            .fold(0.0_f64, f64::max);
        BiasModel::new(b1 * scale, b2 * scale, b3)
    }
}
