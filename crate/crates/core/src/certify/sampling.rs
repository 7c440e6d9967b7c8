use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::geometry::ConvexSet;
use crate::point::Point;
use crate::random::RandomSource;

/// Deterministic radial shells plus uniform random points in a ball.
///
/// Shell radii are log-spaced in `[radius * inner_fraction, radius]`; shell
/// directions are golden-angle rotated in 2D and Halton-based otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub radius: f64,
    pub center: Option<Point>,
    pub shells: usize,
    pub directions: usize,
    pub random: usize,
    pub inner_fraction: f64,
    pub include_center: bool,
    pub seed: u64,
    #[serde(default)]
    pub extra: Vec<Point>,
}

impl SamplingPlan {
    pub fn ball(radius: f64) -> Self {
        SamplingPlan {
            radius,
            center: None,
            shells: 20,
            directions: 64,
            random: 1000,
            inner_fraction: 1e-3,
            include_center: true,
            seed: 0,
            extra: Vec::new(),
        }
    }

    pub fn centered(mut self, c: Point) -> Self {
        self.center = Some(c);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_counts(mut self, shells: usize, directions: usize, random: usize) -> Self {
        self.shells = shells;
        self.directions = directions;
        self.random = random;
        self
    }

    pub fn with_extra(mut self, pts: Vec<Point>) -> Self {
        self.extra.extend(pts);
        self
    }

    pub fn without_center(mut self) -> Self {
        self.include_center = false;
        self
    }

    /// Same layout, fresh random points and rotated shells.
    pub fn fresh(&self) -> Self {
        let mut p = self.clone();
        p.seed = self.seed.wrapping_add(0x5EED_F00D);
        p
    }

    pub fn center_point(&self, dim: usize) -> Point {
        self.center.clone().unwrap_or_else(|| Point::zeros(dim))
    }

    pub fn shell_radii(&self) -> Vec<f64> {
        let s = self.shells;
        if s == 0 {
            return Vec::new();
        }
        if s == 1 {
            return vec![self.radius];
        }
        let lo = (self.radius * self.inner_fraction).ln();
        let hi = self.radius.ln();
        (0..s)
            .map(|k| (lo + (hi - lo) * k as f64 / (s - 1) as f64).exp())
            .collect()
    }

    pub fn points(&self, dim: usize) -> Vec<Point> {
        let c = self.center_point(dim);
        let mut rng = RandomSource::with_stream(self.seed, 0xCE47);
        let offset = rng.uniform();
        let mut out = Vec::new();
        if self.include_center {
            out.push(c.clone());
        }
        for (s, r) in self.shell_radii().into_iter().enumerate() {
            for u in shell_directions(dim, self.directions, s, offset) {
                out.push(c.axpy(r, &u));
            }
        }
        for _ in 0..self.random {
            let u = rng.unit_sphere_point(dim);
            let r = self.radius * rng.uniform().powf(1.0 / dim as f64);
            out.push(c.axpy(r, &u));
        }
        out.extend(self.extra.iter().filter(|p| p.dim() == dim).cloned());
        out
    }

    /// Points of a convex set: uniform, boundary-biased and the plan's extras
    /// that lie in the set.
    pub fn points_in_set(&self, set: &ConvexSet) -> Vec<Point> {
        let mut rng = RandomSource::with_stream(self.seed, 0x5E7);
        let n = self.random.max(1);
        let mut out: Vec<Point> = (0..n).map(|_| set.sample(&mut rng)).collect();
        out.extend((0..n).map(|_| set.sample_boundary(&mut rng)));
        out.extend(self.extra.iter().filter(|p| set.contains(p)).cloned());
        out
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

fn shell_directions(dim: usize, count: usize, shell: usize, offset: f64) -> Vec<Point> {
    match dim {
        1 => vec![Point::from_vec(vec![1.0]), Point::from_vec(vec![-1.0])],
        2 => {
            let rot = (offset + shell as f64 * GOLDEN).fract();
            (0..count)
                .map(|k| {
                    let th = std::f64::consts::TAU * (k as f64 + rot) / count as f64;
                    Point::from_vec(vec![th.cos(), th.sin()])
                })
                .collect()
        }
        _ => {
            let normal = Normal::standard();
            let start = (shell * count) as u64 + 1 + (offset * 1e6) as u64;
            (0..count as u64)
                .filter_map(|k| {
                    let g: Vec<f64> = (0..dim)
                        .map(|j| {
                            let u = radical_inverse(start + k, PRIMES[j % PRIMES.len()]);
                            normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
                        })
                        .collect();
                    Point::from_vec(g).normalized()
                })
                .collect()
        }
    }
}
