use serde::{Deserialize, Serialize};

use super::problem::Problem;
use super::quadrature::{gaussian_expectation, scaled_sphere_expectation};
use crate::error::{Result, SriError};
use crate::point::Point;
use crate::random::RandomSource;
use crate::trace::Probe;

/// Additive Gaussian noise on function values, with a separate mean for each
/// query side of the symmetric difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean_plus: f64,
    pub mean_minus: f64,
    /// Common standard deviation; zero gives a deterministic offset.
    pub sigma: f64,
}

impl NoiseSpec {
    pub const NOISELESS: NoiseSpec = NoiseSpec {
        mean_plus: 0.0,
        mean_minus: 0.0,
        sigma: 0.0,
    };

    pub fn gaussian(mean_plus: f64, mean_minus: f64, sigma: f64) -> Result<Self> {
        let n = NoiseSpec {
            mean_plus,
            mean_minus,
            sigma,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_plus.is_finite() && self.mean_minus.is_finite()) {
            return Err(SriError::Config("noise means must be finite".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SriError::Config(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    fn mean(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.mean_plus,
            Side::Minus => self.mean_minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Law of the perturbation direction `u`. Both satisfy `E[u u^T] = I`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionLaw {
    #[default]
    GaussianIsotropic,
    /// `sqrt(d)` times a uniform unit vector.
    UnitSphereScaled,
}

impl DirectionLaw {
    pub fn sample(&self, dim: usize, rng: &mut RandomSource) -> Point {
        match self {
            DirectionLaw::GaussianIsotropic => rng.gaussian_point(dim),
            DirectionLaw::UnitSphereScaled => rng.unit_sphere_point(dim).scale((dim as f64).sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoEstimatorConfig {
    pub lambda: f64,
    #[serde(default)]
    pub direction_law: DirectionLaw,
    pub noise: NoiseSpec,
}

impl ZoEstimatorConfig {
    pub fn new(lambda: f64, direction_law: DirectionLaw, noise: NoiseSpec) -> Result<Self> {
        let c = ZoEstimatorConfig {
            lambda,
            direction_law,
            noise,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(SriError::Config(format!(
                "smoothing parameter must be positive, got {}",
                self.lambda
            )));
        }
        self.noise.validate()
    }
}

/// `f(x) + e` with `e ~ N(mean_side, sigma^2)`.
pub fn query_value(
    problem: &Problem,
    noise: &NoiseSpec,
    side: Side,
    x: &Point,
    rng: &mut RandomSource,
) -> f64 {
    let e = if noise.sigma > 0.0 {
        rng.normal(noise.mean(side), noise.sigma)
    } else {
        noise.mean(side)
    };
    problem.value(x) + e
}

/// One two-point estimate together with the raw ingredients that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoDraw {
    pub estimate: Point,
    pub probe: Probe,
}

/// `(f^(x + lambda u) - f^(x - lambda u)) / (2 lambda) * u`.
pub fn zo_gradient(
    problem: &Problem,
    cfg: &ZoEstimatorConfig,
    x: &Point,
    rng: &mut RandomSource,
) -> Result<ZoDraw> {
    cfg.validate()?;
    if x.dim() != problem.dim() {
        return Err(SriError::Domain(format!(
            "point dimension {} does not match problem dimension {}",
            x.dim(),
            problem.dim()
        )));
    }
    let u = cfg.direction_law.sample(problem.dim(), rng);
    let plus = query_value(
        problem,
        &cfg.noise,
        Side::Plus,
        &x.axpy(cfg.lambda, &u),
        rng,
    );
    let minus = query_value(
        problem,
        &cfg.noise,
        Side::Minus,
        &x.axpy(-cfg.lambda, &u),
        rng,
    );
    let estimate = u.scale((plus - minus) / (2.0 * cfg.lambda));
    Ok(ZoDraw {
        estimate,
        probe: Probe {
            direction: u,
            value_plus: plus,
            value_minus: minus,
        },
    })
}

/// `E[estimate | x]`.
///
/// The noise means enter only through `(mean_plus - mean_minus) / (2 lambda) * E[u]`,
/// which vanishes for both direction laws, so only the noiseless symmetric
/// difference contributes. Uses the problem's closed-form Gaussian smoothing when
/// available and quadrature otherwise (dimension <= 2). `None` when neither applies.
pub fn conditional_mean(problem: &Problem, cfg: &ZoEstimatorConfig, x: &Point) -> Option<Point> {
    if cfg.direction_law == DirectionLaw::GaussianIsotropic {
        if let Some(g) = problem.smoothed_gradient(x, cfg.lambda) {
            return Some(g);
        }
    }
    conditional_mean_by_quadrature(problem, cfg, x)
}

pub fn conditional_mean_by_quadrature(
    problem: &Problem,
    cfg: &ZoEstimatorConfig,
    x: &Point,
) -> Option<Point> {
    let lam = cfg.lambda;
    let quotient = |u: &Point| {
        let diff = problem.value(&x.axpy(lam, u)) - problem.value(&x.axpy(-lam, u));
        u.scale(diff / (2.0 * lam))
    };
    match cfg.direction_law {
        DirectionLaw::GaussianIsotropic => gaussian_expectation(problem.dim(), quotient),
        DirectionLaw::UnitSphereScaled => scaled_sphere_expectation(problem.dim(), quotient),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMeasurement {
    pub bias: Point,
    pub norm: f64,
    /// CLT radius of the Monte-Carlo mean: `sqrt(sum_i var_i / samples)`.
    pub standard_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentMeasurement {
    pub value: f64,
    pub standard_error: f64,
    pub samples: usize,
}

pub const MIN_MONTE_CARLO_SAMPLES: usize = 1_000;

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_MONTE_CARLO_SAMPLES {
        return Err(SriError::Domain(format!(
            "Monte-Carlo measurement needs at least {MIN_MONTE_CARLO_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(())
}

/// Monte-Carlo estimate of `E[estimate] - grad f(x)`.
pub fn measure_bias(
    problem: &Problem,
    cfg: &ZoEstimatorConfig,
    x: &Point,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<BiasMeasurement> {
    check_samples(samples)?;
    let grad = problem.require_gradient()?(x);
    let d = problem.dim();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..samples {
        let e = zo_gradient(problem, cfg, x, rng)?.estimate;
        for i in 0..d {
            // centring on the gradient keeps the running sums well scaled
            let r = e[i] - grad[i];
            sum[i] += r;
            sum_sq[i] += r * r;
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let var_total: f64 = (0..d)
        .map(|i| (sum_sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0))
        .sum();
    let bias = Point::from_vec(mean);
    Ok(BiasMeasurement {
        norm: bias.norm(),
        bias,
        standard_error: (var_total / n).sqrt(),
        samples,
    })
}

/// Monte-Carlo estimate of `E[||estimate - grad f(x)||^2]`.
pub fn measure_second_moment(
    problem: &Problem,
    cfg: &ZoEstimatorConfig,
    x: &Point,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<MomentMeasurement> {
    check_samples(samples)?;
    let grad = problem.require_gradient()?(x);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let r = zo_gradient(problem, cfg, x, rng)?
            .estimate
            .distance(&grad)
            .powi(2);
        s += r;
        s2 += r * r;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean).max(0.0)) * n / (n - 1.0);
    Ok(MomentMeasurement {
        value: mean,
        standard_error: (var / n).sqrt(),
        samples,
    })
}

/// Draws of the centred residual `-(estimate - E[estimate | x])`, the inclusion
/// noise `M_{n+1}` of a gradient-descent step taken at `x`.
pub fn residual_sampler(
    problem: Problem,
    cfg: ZoEstimatorConfig,
) -> Result<impl Fn(&Point, &mut RandomSource) -> Point + Send + Sync> {
    cfg.validate()?;
    Ok(move |x: &Point, rng: &mut RandomSource| {
        let mean = conditional_mean(&problem, &cfg, x)
            .expect("conditional mean available for this problem");
        let est = zo_gradient(&problem, &cfg, x, rng)
            .expect("validated configuration")
            .estimate;
        &mean - &est
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::problem::{constant, f1, f2, l1_norm, linear, squared_norm};
    use crate::pt;

    fn cfg(lambda: f64, noise: NoiseSpec) -> ZoEstimatorConfig {
        ZoEstimatorConfig::new(lambda, DirectionLaw::GaussianIsotropic, noise).unwrap()
    }

    #[test]
    fn noiseless_query_is_exact() {
        let mut rng = RandomSource::new(0);
        let p = f1();
        let x = pt![1.0, 1.0];
        let v = query_value(&p, &NoiseSpec::NOISELESS, Side::Plus, &x, &mut rng);
        assert_eq!(v, p.value(&x));
        let shifted = NoiseSpec::gaussian(5.0, 1.0, 0.0).unwrap();
        let v = query_value(&p, &shifted, Side::Plus, &x, &mut rng);
        // direct evaluation of x1^2 + x2^2 + sin x2 + 5
        assert!((v - 7.8415).abs() < 5e-5, "{v}");
        assert!((v - (1.0 + 1.0 + 1f64.sin() + 5.0)).abs() < 1e-14);
    }

    #[test]
    fn noisy_query_mean_within_clt_bound() {
        let mut rng = RandomSource::new(11);
        let p = f1();
        let x = pt![0.2, -0.7];
        let noise = NoiseSpec::gaussian(5.0, 1.0, 1.0).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| query_value(&p, &noise, Side::Plus, &x, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - (p.value(&x) + 5.0)).abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn constant_function_gives_zero_estimate() {
        let mut rng = RandomSource::new(1);
        let p = constant(3, 4.2);
        let c = cfg(0.3, NoiseSpec::NOISELESS);
        for _ in 0..20 {
            let d = zo_gradient(&p, &c, &pt![1.0, 2.0, 3.0], &mut rng).unwrap();
            assert_eq!(d.estimate, Point::zeros(3));
        }
    }

    #[test]
    fn linear_function_estimate_is_unbiased() {
        let mut rng = RandomSource::new(2);
        let a = pt![1.5, -0.5];
        let p = linear(a.clone());
        let c = cfg(0.2, NoiseSpec::NOISELESS);
        let n = 1_000_000;
        let mut sum = Point::zeros(2);
        let mut sum_sq = [0.0; 2];
        for _ in 0..n {
            let e = zo_gradient(&p, &c, &pt![0.3, 0.1], &mut rng)
                .unwrap()
                .estimate;
            for i in 0..2 {
                sum_sq[i] += e[i] * e[i];
            }
            sum = &sum + &e;
        }
        let mean = sum.scale(1.0 / n as f64);
        for i in 0..2 {
            let var = sum_sq[i] / n as f64 - mean[i] * mean[i];
            let se = (var / n as f64).sqrt();
            assert!((mean[i] - a[i]).abs() < 4.0 * se, "coord {i}");
        }
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let mut rng = RandomSource::new(0);
        let bad = ZoEstimatorConfig {
            lambda: 0.0,
            direction_law: DirectionLaw::GaussianIsotropic,
            noise: NoiseSpec::NOISELESS,
        };
        assert!(matches!(
            zo_gradient(&f1(), &bad, &pt![0.0, 0.0], &mut rng),
            Err(SriError::Config(_))
        ));
    }

    #[test]
    fn probe_reconstructs_estimate() {
        let mut rng = RandomSource::new(3);
        let c = cfg(0.1, NoiseSpec::gaussian(5.0, 1.0, 1.0).unwrap());
        let d = zo_gradient(&f1(), &c, &pt![1.0, 1.0], &mut rng).unwrap();
        let p = &d.probe;
        let again = p.direction.scale((p.value_plus - p.value_minus) / 0.2);
        assert_eq!(again, d.estimate);
    }

    #[test]
    fn closed_form_and_quadrature_conditional_means_agree() {
        let x = pt![0.7, -1.3];
        for p in [f1(), f2(), squared_norm(2)] {
            for lambda in [0.01, 0.3, 1.0] {
                let c = cfg(lambda, NoiseSpec::NOISELESS);
                let a = p.smoothed_gradient(&x, lambda).unwrap();
                let b = conditional_mean_by_quadrature(&p, &c, &x).unwrap();
                assert!(
                    a.distance(&b) < 1e-9,
                    "{} lambda={lambda}: {a} vs {b}",
                    p.name()
                );
            }
        }
        // Kinked objective: quadrature converges slowly, closed form is erf.
        let p = l1_norm(1);
        let c = cfg(0.5, NoiseSpec::NOISELESS);
        let a = p.smoothed_gradient(&pt![0.2], 0.5).unwrap();
        let b = conditional_mean_by_quadrature(&p, &c, &pt![0.2]).unwrap();
        assert!(a.distance(&b) < 5e-3, "{a} vs {b}");
    }

    #[test]
    fn conditional_mean_matches_monte_carlo_for_sphere_law() {
        let p = f1();
        let x = pt![1.0, 1.0];
        let c = ZoEstimatorConfig::new(
            0.8,
            DirectionLaw::UnitSphereScaled,
            NoiseSpec::gaussian(5.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let exact = conditional_mean(&p, &c, &x).unwrap();
        let mut rng = RandomSource::new(4);
        let m = measure_bias(&p, &c, &x, 400_000, &mut rng).unwrap();
        let grad = p.gradient(&x).unwrap();
        let mc_mean = &grad + &m.bias;
        assert!(mc_mean.distance(&exact) < 4.0 * m.standard_error);
    }

    #[test]
    fn bias_vanishes_at_stationary_point_of_quadratic() {
        let mut rng = RandomSource::new(5);
        let p = squared_norm(2);
        for lambda in [0.05, 1.0] {
            let m = measure_bias(
                &p,
                &cfg(lambda, NoiseSpec::NOISELESS),
                &Point::zeros(2),
                10_000,
                &mut rng,
            )
            .unwrap();
            assert!(m.norm <= m.standard_error, "lambda={lambda}");
        }
    }

    #[test]
    fn bias_requires_gradient_and_enough_samples() {
        let mut rng = RandomSource::new(0);
        let c = cfg(0.1, NoiseSpec::NOISELESS);
        assert!(matches!(
            measure_bias(&l1_norm(2), &c, &pt![1.0, 1.0], 1000, &mut rng),
            Err(SriError::Capability(_))
        ));
        assert!(matches!(
            measure_bias(&f1(), &c, &pt![1.0, 1.0], 999, &mut rng),
            Err(SriError::Domain(_))
        ));
    }

    #[test]
    fn second_moment_scales_like_inverse_lambda_squared() {
        let p = f1();
        let x = pt![1.0, 1.0];
        let noise = NoiseSpec::gaussian(5.0, 1.0, 1.0).unwrap();
        let mut rng = RandomSource::new(6);
        let a = measure_second_moment(&p, &cfg(0.01, noise), &x, 100_000, &mut rng).unwrap();
        let b = measure_second_moment(&p, &cfg(0.1, noise), &x, 100_000, &mut rng).unwrap();
        let ratio = a.value / b.value;
        assert!((50.0..=200.0).contains(&ratio), "ratio {ratio}");
        let c = measure_second_moment(&p, &cfg(0.0005, noise), &x, 100_000, &mut rng).unwrap();
        let d = measure_second_moment(&p, &cfg(0.05, noise), &x, 100_000, &mut rng).unwrap();
        assert!(c.value >= 1e3 * d.value, "{} vs {}", c.value, d.value);
    }

    #[test]
    fn second_moment_of_linear_function_ignores_lambda() {
        // Exact difference quotient: the residual is (u u^T - I) a, independent of lambda.
        let a = pt![1.0, 2.0];
        let p = linear(a.clone());
        // E||(u u^T - I) a||^2 = (d + 1) ||a||^2 for Gaussian u
        let expect = 3.0 * a.norm_sq();
        let mut out = vec![];
        for (seed, lambda) in [(7, 0.01), (7, 3.0)] {
            let mut rng = RandomSource::new(seed);
            out.push(
                measure_second_moment(
                    &p,
                    &cfg(lambda, NoiseSpec::NOISELESS),
                    &pt![0.0, 0.0],
                    20_000,
                    &mut rng,
                )
                .unwrap(),
            );
        }
        assert!((out[0].value - out[1].value).abs() < 1e-9 * out[0].value.max(1.0));
        assert!((out[0].value - expect).abs() < 4.0 * out[0].standard_error);
    }

    #[test]
    fn smoothing_bias_grows_with_lambda_while_mean_gap_cancels() {
        // With zero-mean directions the (5, 1) mean gap contributes nothing to the
        // conditional mean; the bias at (1, 1) is the smoothing term
        // cos(1) (1 - exp(-lambda^2 / 2)) in the second coordinate.
        let p = f1();
        let x = pt![1.0, 1.0];
        let noise = NoiseSpec::gaussian(5.0, 1.0, 1.0).unwrap();
        for lambda in [0.05, 0.5, 1.0] {
            let c = cfg(lambda, noise);
            let exact = &conditional_mean(&p, &c, &x).unwrap() - &p.gradient(&x).unwrap();
            let closed = 1f64.cos() * (1.0 - (-0.5 * lambda * lambda).exp());
            assert!((exact.norm() - closed).abs() < 1e-12);
        }
        let mut rng = RandomSource::new(8);
        let small = measure_bias(&p, &cfg(0.05, noise), &x, 200_000, &mut rng).unwrap();
        let large = measure_bias(&p, &cfg(1.0, noise), &x, 200_000, &mut rng).unwrap();
        assert!(large.norm > small.norm);
    }
}
