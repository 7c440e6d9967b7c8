use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::DIVERGENCE_NORM;
use crate::error::{Result, SriError};
use crate::oracles::VectorFn;
use crate::point::Point;
use crate::random::RandomSource;
use crate::schedule::StepSchedule;
use crate::trace::{StepRecord, Trace};

/// Law of the synthetic noise `M_{n+1}` fed to [`simulate_sri`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseLaw {
    Zero,
    /// Independent N(0, sigma^2) coordinates.
    Gaussian {
        sigma: f64,
    },
    /// Independent uniform coordinates on `[-half_width, half_width]`.
    Uniform {
        half_width: f64,
    },
    /// The same vector every step. Not a martingale difference; used as a control.
    Constant(Point),
}

impl NoiseLaw {
    pub fn sample(&self, dim: usize, rng: &mut RandomSource) -> Point {
        match self {
            NoiseLaw::Zero => Point::zeros(dim),
            NoiseLaw::Gaussian { sigma } => rng.gaussian_point(dim).scale(*sigma),
            NoiseLaw::Uniform { half_width } => Point::from_vec(
                (0..dim)
                    .map(|_| rng.uniform_in(-half_width, *half_width))
                    .collect(),
            ),
            NoiseLaw::Constant(c) => c.clone(),
        }
    }
}

/// `x_{n+1} = x_n + alpha_n (h(x_n) + b + M_{n+1})` with noise and bias logged.
pub fn simulate_sri(
    field: &VectorFn,
    schedule: Arc<StepSchedule>,
    x0: Point,
    steps: usize,
    noise: &NoiseLaw,
    bias: Option<&Point>,
    seed: u64,
) -> Result<Trace> {
    let d = x0.dim();
    if let NoiseLaw::Constant(c) = noise {
        if c.dim() != d {
            return Err(SriError::Config("constant noise dimension mismatch".into()));
        }
    }
    let b = bias.cloned().unwrap_or_else(|| Point::zeros(d));
    if b.dim() != d {
        return Err(SriError::Config("bias dimension mismatch".into()));
    }
    let mut rng = RandomSource::new(seed);
    let mut tr = Trace::with_capacity(x0.clone(), schedule, seed, steps)?;
    let mut x = x0;
    for n in 0..steps {
        let m = noise.sample(d, &mut rng);
        let v = &(&field(&x) + &b) + &m;
        let next = x.axpy(tr.alpha(n), &v);
        if !next.is_finite() || next.norm() > DIVERGENCE_NORM {
            return Err(SriError::Divergence {
                index: n,
                time: tr.clock(n),
                reason: format!("iterate norm {} exceeds {DIVERGENCE_NORM:e}", next.norm()),
            });
        }
        let rec = StepRecord {
            estimate: v,
            noise: Some(m),
            bias: Some(b.clone()),
            normal: None,
            probe: None,
        };
        tr.push(rec, next.clone())?;
        x = next;
    }
    Ok(tr)
}
