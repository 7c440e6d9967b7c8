//! Compact convex sets with exact Euclidean projections and exact
//! projections onto their normal and tangent cones.
//!
//! The simplex variant is the full-dimensional corner simplex
//! `{x >= 0, sum(x) <= scale}`, so every variant has an interior.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};
use crate::point::Point;
use crate::random::RandomSource;

/// Tolerance for membership and for detecting active constraints.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Point, radius: f64 },
    Simplex { dim: usize, scale: f64 },
}

impl ConvexSet {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let s = ConvexSet::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn new_ball(center: Point, radius: f64) -> Result<Self> {
        let s = ConvexSet::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn new_simplex(dim: usize, scale: f64) -> Result<Self> {
        let s = ConvexSet::Simplex { dim, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(SriError::Config(
                        "box bounds must be nonempty and of equal length".into(),
                    ));
                }
                if lo.iter().chain(hi).any(|v| !v.is_finite()) {
                    return Err(SriError::Config("box bounds must be finite".into()));
                }
                if lo.iter().zip(hi).any(|(a, b)| a >= b) {
                    return Err(SriError::Config(
                        "box needs lo < hi in every coordinate".into(),
                    ));
                }
            }
            ConvexSet::Ball { radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(SriError::Config(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
            ConvexSet::Simplex { dim, scale } => {
                if *dim == 0 || !(scale.is_finite() && *scale > 0.0) {
                    return Err(SriError::Config(
                        "simplex needs dim >= 1 and scale > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.dim(),
            ConvexSet::Simplex { dim, .. } => *dim,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConvexSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt(),
            ConvexSet::Ball { radius, .. } => 2.0 * radius,
            ConvexSet::Simplex { dim, scale } => {
                if *dim == 1 {
                    *scale
                } else {
                    scale * std::f64::consts::SQRT_2
                }
            }
        }
    }

    fn check_dim(&self, v: &Point) -> Result<()> {
        if v.dim() != self.dim() {
            return Err(SriError::Domain(format!(
                "point has dimension {}, set has dimension {}",
                v.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: &Point) -> bool {
        if x.dim() != self.dim() {
            return false;
        }
        let tol = BOUNDARY_TOL;
        match self {
            ConvexSet::Box { lo, hi } => x
                .coords()
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol),
            ConvexSet::Ball { center, radius } => x.distance(center) <= radius + tol,
            ConvexSet::Simplex { scale, .. } => {
                x.coords().iter().all(|v| *v >= -tol)
                    && x.coords().iter().sum::<f64>() <= scale + tol
            }
        }
    }

    /// Euclidean projection `argmin_{y in S} ||y - v||`.
    pub fn project(&self, v: &Point) -> Result<Point> {
        self.check_dim(v)?;
        Ok(match self {
            ConvexSet::Box { lo, hi } => Point::from_vec(
                v.coords()
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(x, (a, b))| x.clamp(*a, *b))
                    .collect(),
            ),
            ConvexSet::Ball { center, radius } => {
                let off = v - center;
                let r = off.norm();
                if r <= *radius {
                    v.clone()
                } else {
                    center.axpy(radius / r, &off)
                }
            }
            ConvexSet::Simplex { scale, .. } => {
                let clipped: Vec<f64> = v.coords().iter().map(|x| x.max(0.0)).collect();
                if clipped.iter().sum::<f64>() <= *scale {
                    Point::from_vec(clipped)
                } else {
                    Point::from_vec(project_onto_face(v.coords(), *scale))
                }
            }
        })
    }

    fn require_member(&self, x: &Point) -> Result<()> {
        self.check_dim(x)?;
        if !self.contains(x) {
            return Err(SriError::Domain(format!("{x} is not in the set")));
        }
        Ok(())
    }

    /// Projection of `v` onto the normal cone `N_S(x)`; zero at interior points.
    pub fn normal_cone_project(&self, x: &Point, v: &Point) -> Result<Point> {
        self.require_member(x)?;
        self.check_dim(v)?;
        let tol = BOUNDARY_TOL;
        Ok(match self {
            ConvexSet::Box { lo, hi } => Point::from_vec(
                (0..x.dim())
                    .map(|i| {
                        let at_hi = x[i] >= hi[i] - tol;
                        let at_lo = x[i] <= lo[i] + tol;
                        match (at_lo, at_hi) {
                            (true, true) => v[i],
                            (false, true) => v[i].max(0.0),
                            (true, false) => v[i].min(0.0),
                            (false, false) => 0.0,
                        }
                    })
                    .collect(),
            ),
            ConvexSet::Ball { center, radius } => {
                let off = x - center;
                let r = off.norm();
                if r >= radius - tol && r > 0.0 {
                    let n = off.scale(1.0 / r);
                    n.scale(v.dot(&n).max(0.0))
                } else {
                    Point::zeros(x.dim())
                }
            }
            ConvexSet::Simplex { scale, .. } => {
                let zero: Vec<bool> = x.coords().iter().map(|c| *c <= tol).collect();
                let sum_active = x.coords().iter().sum::<f64>() >= scale - tol;
                Point::from_vec(simplex_normal_projection(v.coords(), &zero, sum_active))
            }
        })
    }

    /// `P_{T_S(x)}(v) = v - P_{N_S(x)}(v)`.
    pub fn tangent_cone_project(&self, x: &Point, v: &Point) -> Result<Point> {
        Ok(v - &self.normal_cone_project(x, v)?)
    }

    /// Is `nu` in `{nu in N_S(x) : ||nu|| <= bound}`? False when `x` is outside the set.
    pub fn truncated_normal_membership(&self, x: &Point, nu: &Point, bound: f64) -> bool {
        if !self.contains(x) || nu.dim() != self.dim() {
            return false;
        }
        let proj = self
            .normal_cone_project(x, nu)
            .expect("membership was checked");
        let in_cone = proj.distance(nu) <= BOUNDARY_TOL * (1.0 + nu.norm());
        in_cone && nu.norm() <= bound
    }

    /// Uniform sample from the set.
    pub fn sample(&self, rng: &mut RandomSource) -> Point {
        match self {
            ConvexSet::Box { lo, hi } => Point::from_vec(
                lo.iter()
                    .zip(hi)
                    .map(|(a, b)| rng.uniform_in(*a, *b))
                    .collect(),
            ),
            ConvexSet::Ball { center, radius } => {
                let d = center.dim();
                let dir = rng.unit_sphere_point(d);
                let r = radius * rng.uniform().powf(1.0 / d as f64);
                center.axpy(r, &dir)
            }
            ConvexSet::Simplex { dim, scale } => {
                let e: Vec<f64> = (0..=*dim).map(|_| rng.exponential()).collect();
                let total: f64 = e.iter().sum();
                Point::from_vec(e[..*dim].iter().map(|v| scale * v / total).collect())
            }
        }
    }

    /// A sample pushed onto the boundary, to exercise active constraints.
    pub fn sample_boundary(&self, rng: &mut RandomSource) -> Point {
        match self {
            ConvexSet::Box { lo, hi } => {
                let mut p = self.sample(rng).into_vec();
                let k = 1 + rng.index(p.len());
                for _ in 0..k {
                    let i = rng.index(p.len());
                    p[i] = if rng.uniform() < 0.5 { lo[i] } else { hi[i] };
                }
                Point::from_vec(p)
            }
            ConvexSet::Ball { center, radius } => {
                center.axpy(*radius, &rng.unit_sphere_point(center.dim()))
            }
            ConvexSet::Simplex { dim, scale } => {
                let mut p = self.sample(rng).into_vec();
                for v in p.iter_mut().take(*dim) {
                    if rng.uniform() < 0.4 {
                        *v = 0.0;
                    }
                }
                if rng.uniform() < 0.5 {
                    let s: f64 = p.iter().sum();
                    if s > 0.0 {
                        p.iter_mut().for_each(|v| *v *= scale / s);
                    }
                }
                Point::from_vec(p)
            }
        }
    }
}

/// Projection onto `{x >= 0, sum(x) = scale}` by sorting.
fn project_onto_face(v: &[f64], scale: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - scale) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection onto `{mu 1 - w : w >= 0, w_i = 0 off the zero set, mu >= 0}`
/// (or `mu = 0` when the sum constraint is inactive).
///
/// For fixed `mu` the best cone element has `nu_i = mu` off the zero set and
/// `nu_i = min(v_i, mu)` on it; the remaining one-dimensional problem in `mu`
/// is convex and piecewise quadratic, solved over the sorted breakpoints.
fn simplex_normal_projection(v: &[f64], zero: &[bool], sum_active: bool) -> Vec<f64> {
    let mu = if sum_active {
        let free: Vec<f64> = v
            .iter()
            .zip(zero)
            .filter(|(_, z)| !**z)
            .map(|(x, _)| *x)
            .collect();
        let mut pinned: Vec<f64> = v
            .iter()
            .zip(zero)
            .filter(|(_, z)| **z)
            .map(|(x, _)| *x)
            .collect();
        pinned.sort_by(|a, b| b.total_cmp(a));
        let mut num: f64 = free.iter().sum();
        let mut den = free.len() as f64;
        let mut mu = f64::NAN;
        for k in 0..=pinned.len() {
            if k > 0 {
                num += pinned[k - 1];
                den += 1.0;
            }
            if den == 0.0 {
                continue;
            }
            let cand = num / den;
            let above_ok = k == 0 || pinned[k - 1] > cand;
            let below_ok = k == pinned.len() || pinned[k] <= cand;
            if above_ok && below_ok {
                mu = cand;
                break;
            }
        }
        if mu.is_nan() {
            // no free coordinates: the objective is nonincreasing in mu
            mu = pinned.first().copied().unwrap_or(0.0);
        }
        mu.max(0.0)
    } else {
        0.0
    };
    v.iter()
        .zip(zero)
        .map(|(x, z)| if *z { x.min(mu) } else { mu })
        .collect()
}
