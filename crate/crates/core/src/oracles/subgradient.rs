use serde::{Deserialize, Serialize};

use super::bias::BiasModel;
use super::problem::Problem;
use crate::error::{Result, SriError};
use crate::point::Point;
use crate::random::RandomSource;

/// Direction of the deterministic bias `B(n)`, whose norm is always `epsilon(lambda)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasDirection {
    /// First coordinate axis.
    #[default]
    FirstAxis,
    /// Fixed direction, normalized before use.
    Fixed(Point),
    /// Along `-g(n)`, opposing descent; falls back to the first axis when `g(n) = 0`.
    Adversarial,
}

/// `g(n) + B(n) + M(n+1)` with every part logged.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientDraw {
    pub value: Point,
    pub subgradient: Point,
    pub bias: Point,
    pub noise: Point,
}

pub fn biased_subgradient(
    problem: &Problem,
    model: &BiasModel,
    lambda: f64,
    direction: &BiasDirection,
    x: &Point,
    rng: &mut RandomSource,
) -> Result<SubgradientDraw> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(SriError::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let g = problem.require_subgradient()?(x);
    let d = x.dim();
    let axis = Point::basis(d, 0);
    let unit = match direction {
        BiasDirection::FirstAxis => axis,
        BiasDirection::Fixed(v) => v
            .normalized()
            .ok_or_else(|| SriError::Config("bias direction must be nonzero".into()))?,
        BiasDirection::Adversarial => (-&g).normalized().unwrap_or(axis),
    };
    if unit.dim() != d {
        return Err(SriError::Config("bias direction dimension mismatch".into()));
    }
    let bias = unit.scale(model.epsilon(lambda));
    // per-coordinate variance b3 / (lambda^2 d) gives E||M||^2 = b3 / lambda^2
    let sd = (model.variance_bound(lambda) / d as f64).sqrt();
    let noise = if sd > 0.0 {
        rng.gaussian_point(d).scale(sd)
    } else {
        Point::zeros(d)
    };
    let value = &(&g + &bias) + &noise;
    Ok(SubgradientDraw {
        value,
        subgradient: g,
        bias,
        noise,
    })
}
