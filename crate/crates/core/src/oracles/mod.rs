//! Noisy zeroth-order oracles, the symmetric two-point gradient estimator,
//! biased subgradient oracles and Monte-Carlo bias/variance measurement.

mod bias;
pub mod problem;
pub mod quadrature;
mod subgradient;
mod zo;

pub use bias::{BiasModel, SweepPoint};
pub use problem::{Problem, ProblemConstants, ScalarFn, SmoothedGradientFn, VectorFn};
pub use subgradient::{biased_subgradient, BiasDirection, SubgradientDraw};
pub use zo::{
    conditional_mean, conditional_mean_by_quadrature, measure_bias, measure_second_moment,
    query_value, residual_sampler, zo_gradient, BiasMeasurement, DirectionLaw, MomentMeasurement,
    NoiseSpec, Side, ZoDraw, ZoEstimatorConfig, MIN_MONTE_CARLO_SAMPLES,
};
