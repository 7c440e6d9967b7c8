use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Result, SriError};
use crate::point::Point;

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
/// `(x, lambda) -> E[estimate]` for the noiseless Gaussian-direction estimator.
pub type SmoothedGradientFn = Arc<dyn Fn(&Point, f64) -> Point + Send + Sync>;

/// Analytic constants a problem may advertise. All optional.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Global Lipschitz constant of the gradient.
    pub lipschitz: Option<f64>,
    pub pl_mu: Option<f64>,
    pub growth_lower: Option<f64>,
    pub growth_upper: Option<f64>,
    /// Strong-monotonicity modulus of the (sub)gradient map.
    pub monotonicity: Option<f64>,
}

/// An objective with whatever first-order information is known about it.
#[derive(Clone)]
pub struct Problem {
    name: String,
    dim: usize,
    objective: ScalarFn,
    gradient: Option<VectorFn>,
    subgradient: Option<VectorFn>,
    smoothed_gradient: Option<SmoothedGradientFn>,
    optimum_value: Option<f64>,
    minimizer: Option<Point>,
    constants: ProblemConstants,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("optimum_value", &self.optimum_value)
            .field("minimizer", &self.minimizer)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        objective: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1);
        Problem {
            name: name.into(),
            dim,
            objective: Arc::new(objective),
            gradient: None,
            subgradient: None,
            smoothed_gradient: None,
            optimum_value: None,
            minimizer: None,
            constants: ProblemConstants::default(),
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Point) -> Point + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// Selection of the subdifferential; convention is the minimum-norm element.
    pub fn with_subgradient(mut self, g: impl Fn(&Point) -> Point + Send + Sync + 'static) -> Self {
        self.subgradient = Some(Arc::new(g));
        self
    }

    pub fn with_smoothed_gradient(
        mut self,
        g: impl Fn(&Point, f64) -> Point + Send + Sync + 'static,
    ) -> Self {
        self.smoothed_gradient = Some(Arc::new(g));
        self
    }

    pub fn with_optimum_value(mut self, f_star: f64) -> Self {
        self.optimum_value = Some(f_star);
        self
    }

    /// Attaches `x*`; when `f*` is also known, `f(x*)` must match it within 1e-9.
    pub fn with_minimizer(mut self, x_star: Point) -> Result<Self> {
        if x_star.dim() != self.dim {
            return Err(SriError::Domain("minimizer dimension mismatch".into()));
        }
        let fx = (self.objective)(&x_star);
        match self.optimum_value {
            Some(f_star) if (fx - f_star).abs() > 1e-9 => {
                return Err(SriError::Config(format!(
                    "f(x*) = {fx} differs from f* = {f_star}"
                )))
            }
            None => self.optimum_value = Some(fx),
            _ => {}
        }
        self.minimizer = Some(x_star);
        Ok(self)
    }

    pub fn with_constants(mut self, c: ProblemConstants) -> Self {
        self.constants = c;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.objective)(x)
    }

    pub fn objective_fn(&self) -> ScalarFn {
        Arc::clone(&self.objective)
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn gradient(&self, x: &Point) -> Option<Point> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn gradient_fn(&self) -> Option<VectorFn> {
        self.gradient.clone()
    }

    pub fn require_gradient(&self) -> Result<VectorFn> {
        self.gradient
            .clone()
            .ok_or_else(|| SriError::Capability(format!("problem `{}` has no gradient", self.name)))
    }

    /// The subgradient selection, falling back to the gradient for smooth problems.
    pub fn subgradient(&self, x: &Point) -> Option<Point> {
        self.subgradient
            .as_ref()
            .or(self.gradient.as_ref())
            .map(|g| g(x))
    }

    pub fn require_subgradient(&self) -> Result<VectorFn> {
        self.subgradient
            .clone()
            .or_else(|| self.gradient.clone())
            .ok_or_else(|| {
                SriError::Capability(format!("problem `{}` has no subgradient", self.name))
            })
    }

    pub fn smoothed_gradient(&self, x: &Point, lambda: f64) -> Option<Point> {
        self.smoothed_gradient.as_ref().map(|g| g(x, lambda))
    }

    pub fn optimum_value(&self) -> Option<f64> {
        self.optimum_value
    }

    pub fn minimizer(&self) -> Option<&Point> {
        self.minimizer.as_ref()
    }

    pub fn constants(&self) -> ProblemConstants {
        self.constants
    }

    /// `|f(x) - f*|`.
    pub fn gap(&self, x: &Point) -> Result<f64> {
        let f_star = self.optimum_value.ok_or_else(|| {
            SriError::Capability(format!("problem `{}` has no reference optimum", self.name))
        })?;
        Ok((self.value(x) - f_star).abs())
    }
}

/// Root of `2 y + cos y = 0`, the second coordinate of both benchmark minimizers.
pub fn benchmark_x2_star() -> f64 {
    let mut y = -0.45_f64;
    for _ in 0..50 {
        let step = (2.0 * y + y.cos()) / (2.0 - y.sin());
        y -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    y
}

fn sin_part(y: f64) -> f64 {
    y * y + y.sin()
}

/// `f1(x) = x1^2 + x2^2 + sin(x2)` on R^2.
///
/// The Hessian is `diag(2, 2 - sin x2)` with eigenvalues in `[1, 3]`, which gives
/// the advertised constants `L = 3`, `mu = 1`, `r1 = 1/2`, `r2 = 3/2`.
pub fn f1() -> Problem {
    let y = benchmark_x2_star();
    Problem::new("f1", 2, |x: &Point| x[0] * x[0] + sin_part(x[1]))
        .with_gradient(|x: &Point| Point::from_vec(vec![2.0 * x[0], 2.0 * x[1] + x[1].cos()]))
        .with_smoothed_gradient(|x: &Point, lambda: f64| {
            let damp = (-0.5 * lambda * lambda).exp();
            Point::from_vec(vec![2.0 * x[0], 2.0 * x[1] + x[1].cos() * damp])
        })
        .with_optimum_value(sin_part(y))
        .with_minimizer(Point::from_vec(vec![0.0, y]))
        .expect("f1 minimizer is consistent")
        .with_constants(ProblemConstants {
            lipschitz: Some(3.0),
            pl_mu: Some(1.0),
            growth_lower: Some(0.5),
            growth_upper: Some(1.5),
            monotonicity: Some(1.0),
        })
}

/// `f2(x) = x1^4 - x1^2 + x2^2 + sin(x2)`: two global minimizers at
/// `x1 = ±1/sqrt(2)` and a saddle on the ridge `x1 = 0`.
pub fn f2() -> Problem {
    let y = benchmark_x2_star();
    let quartic = |a: f64| a.powi(4) - a * a;
    Problem::new("f2", 2, move |x: &Point| quartic(x[0]) + sin_part(x[1]))
        .with_gradient(|x: &Point| {
            Point::from_vec(vec![
                4.0 * x[0].powi(3) - 2.0 * x[0],
                2.0 * x[1] + x[1].cos(),
            ])
        })
        .with_smoothed_gradient(|x: &Point, lambda: f64| {
            let l2 = lambda * lambda;
            let damp = (-0.5 * l2).exp();
            Point::from_vec(vec![
                4.0 * x[0].powi(3) + 12.0 * l2 * x[0] - 2.0 * x[0],
                2.0 * x[1] + x[1].cos() * damp,
            ])
        })
        .with_optimum_value(-0.25 + sin_part(y))
        .with_minimizer(Point::from_vec(vec![std::f64::consts::FRAC_1_SQRT_2, y]))
        .expect("f2 minimizer is consistent")
}

pub fn squared_norm(dim: usize) -> Problem {
    Problem::new("squared_norm", dim, |x: &Point| x.norm_sq())
        .with_gradient(|x: &Point| x.scale(2.0))
        .with_smoothed_gradient(|x: &Point, _| x.scale(2.0))
        .with_optimum_value(0.0)
        .with_minimizer(Point::zeros(dim))
        .expect("origin")
        .with_constants(ProblemConstants {
            lipschitz: Some(2.0),
            pl_mu: Some(2.0),
            growth_lower: Some(1.0),
            growth_upper: Some(1.0),
            monotonicity: Some(2.0),
        })
}

/// `f(x) = x^T A x + b^T x` with `A + A^T` positive definite.
pub fn quadratic(matrix: Vec<Vec<f64>>, linear: Vec<f64>) -> Result<Problem> {
    let d = linear.len();
    if d == 0 || matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
        return Err(SriError::Config(
            "quadratic: matrix must be d x d with d = len(b)".into(),
        ));
    }
    let sym: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| matrix[i][j] + matrix[j][i]).collect())
        .collect();
    let neg_b: Vec<f64> = linear.iter().map(|v| -v).collect();
    let x_star = cholesky_solve(&sym, &neg_b)
        .ok_or_else(|| SriError::Config("quadratic: A + A^T must be positive definite".into()))?;
    let (a, b) = (Arc::new(matrix), Arc::new(linear));
    let (a1, b1) = (Arc::clone(&a), Arc::clone(&b));
    let s = Arc::new(sym);
    let (s1, b2, s2, b3) = (
        Arc::clone(&s),
        Arc::clone(&b),
        Arc::clone(&s),
        Arc::clone(&b),
    );
    let f = move |x: &Point| {
        let xs = x.coords();
        let quad: f64 = (0..xs.len())
            .map(|i| xs[i] * (0..xs.len()).map(|j| a1[i][j] * xs[j]).sum::<f64>())
            .sum();
        quad + xs.iter().zip(b1.iter()).map(|(p, q)| p * q).sum::<f64>()
    };
    let grad = move |x: &Point| affine(&s1, &b2, x);
    let smooth = move |x: &Point, _| affine(&s2, &b3, x);
    Problem::new("quadratic", d, f)
        .with_gradient(grad)
        .with_smoothed_gradient(smooth)
        .with_minimizer(Point::new(x_star)?)
}

fn affine(m: &[Vec<f64>], b: &[f64], x: &Point) -> Point {
    let xs = x.coords();
    Point::from_vec(
        m.iter()
            .zip(b)
            .map(|(row, bi)| row.iter().zip(xs).map(|(p, q)| p * q).sum::<f64>() + bi)
            .collect(),
    )
}

/// Solves `S y = r` for symmetric positive definite `S`; `None` otherwise.
pub(crate) fn cholesky_solve(s: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let d = r.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let sum: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = s[i][i] - sum;
                if v <= 0.0 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (s[i][j] - sum) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        y[i] = (r[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        x[i] = (y[i] - (i + 1..d).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// `f(x) = <c, x>`; unbounded below, so no reference optimum.
pub fn linear(c: Point) -> Problem {
    let (c1, c2, c3) = (c.clone(), c.clone(), c.clone());
    Problem::new("linear", c.dim(), move |x: &Point| c1.dot(x))
        .with_gradient(move |_| c2.clone())
        .with_smoothed_gradient(move |_, _| c3.clone())
}

/// `f(x) = ||x||_1` with the minimum-norm subgradient (zero on zero coordinates).
pub fn l1_norm(dim: usize) -> Problem {
    Problem::new("l1_norm", dim, |x: &Point| x.l1_norm())
        .with_subgradient(|x: &Point| {
            x.map(|c| {
                if c > 0.0 {
                    1.0
                } else if c < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
        })
        .with_smoothed_gradient(|x: &Point, lambda| {
            x.map(|c| erf(c / (lambda * std::f64::consts::SQRT_2)))
        })
        .with_optimum_value(0.0)
        .with_minimizer(Point::zeros(dim))
        .expect("origin")
}

pub fn constant(dim: usize, level: f64) -> Problem {
    Problem::new("constant", dim, move |_| level)
        .with_gradient(move |_| Point::zeros(dim))
        .with_smoothed_gradient(move |_, _| Point::zeros(dim))
        .with_optimum_value(level)
}
