use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};
use crate::point::Point;
use crate::schedule::StepSchedule;

/// Raw ingredients of one two-point estimate: the direction and both noisy values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub direction: Point,
    pub value_plus: f64,
    pub value_minus: f64,
}

/// What the driver knew about step `n -> n+1`.
///
/// `noise` and `bias` use the sign convention of the inclusion
/// `x_{n+1} = x_n + alpha_n (h(x_n) + b_n + M_{n+1})`, so for gradient descent
/// they are the negated estimator residual and the negated estimator bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub estimate: Point,
    pub noise: Option<Point>,
    pub bias: Option<Point>,
    /// Normal-cone element removed by a projection, if any.
    pub normal: Option<Point>,
    pub probe: Option<Probe>,
}

impl StepRecord {
    pub fn estimate_only(estimate: Point) -> Self {
        StepRecord {
            estimate,
            noise: None,
            bias: None,
            normal: None,
            probe: None,
        }
    }
}

/// Append-only iterate history `x_0, ..., x_N` with one record per step.
#[derive(Debug, Clone)]
pub struct Trace {
    points: Vec<Point>,
    steps: Vec<StepRecord>,
    schedule: Arc<StepSchedule>,
    seed: u64,
}

impl Trace {
    pub fn new(x0: Point, schedule: Arc<StepSchedule>, seed: u64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(SriError::Domain("initial point is not finite".into()));
        }
        Ok(Trace {
            points: vec![x0],
            steps: Vec::new(),
            schedule,
            seed,
        })
    }

    pub fn with_capacity(
        x0: Point,
        schedule: Arc<StepSchedule>,
        seed: u64,
        steps: usize,
    ) -> Result<Self> {
        let mut t = Self::new(x0, schedule, seed)?;
        t.points.reserve(steps);
        t.steps.reserve(steps);
        Ok(t)
    }

    /// Appends `x_{n+1}`. Non-finite iterates are refused.
    pub fn push(&mut self, record: StepRecord, next: Point) -> Result<()> {
        let n = self.steps.len();
        if next.dim() != self.dim() {
            return Err(SriError::Domain(format!(
                "step {n}: dimension {} does not match {}",
                next.dim(),
                self.dim()
            )));
        }
        if !next.is_finite() {
            return Err(SriError::Divergence {
                index: n,
                time: self.schedule.clock(n),
                reason: "non-finite iterate".into(),
            });
        }
        self.steps.push(record);
        self.points.push(next);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// Number of steps N.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn schedule_arc(&self) -> Arc<StepSchedule> {
        Arc::clone(&self.schedule)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, n: usize) -> &Point {
        &self.points[n]
    }

    pub fn last(&self) -> &Point {
        self.points.last().expect("trace holds x_0")
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn step(&self, n: usize) -> &StepRecord {
        &self.steps[n]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.schedule.step(n)
    }

    pub fn clock(&self, n: usize) -> f64 {
        self.schedule.clock(n)
    }

    /// `t(N)`.
    pub fn horizon(&self) -> f64 {
        self.schedule.clock(self.len())
    }

    /// `(x_{n+1} - x_n) / alpha_n`.
    pub fn increment(&self, n: usize) -> Point {
        (&self.points[n + 1] - &self.points[n]).scale(1.0 / self.alpha(n))
    }

    pub fn noise_logged(&self) -> bool {
        self.steps.iter().all(|s| s.noise.is_some())
    }

    pub fn bias_logged(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.bias.is_some())
    }

    pub fn noise(&self, n: usize) -> Option<&Point> {
        self.steps[n].noise.as_ref()
    }

    pub fn bias(&self, n: usize) -> Option<&Point> {
        self.steps[n].bias.as_ref()
    }

    /// Step index `n` with `t(n) <= t < t(n+1)`, clamped to `[0, N]`.
    pub fn segment_at(&self, t: f64) -> usize {
        self.schedule.index_at(t, self.len())
    }

    /// Piecewise-linear interpolation through `(t(n), x_n)`.
    pub fn interpolate(&self, t: f64) -> Result<Point> {
        let hi = self.horizon();
        if !(0.0..=hi).contains(&t) {
            return Err(SriError::Range {
                value: t,
                lo: 0.0,
                hi,
            });
        }
        let n = self.segment_at(t);
        if n >= self.len() {
            return Ok(self.last().clone());
        }
        let (t0, t1) = (self.clock(n), self.clock(n + 1));
        let w = (t - t0) / (t1 - t0);
        Ok(self.points[n].axpy(w, &(&self.points[n + 1] - &self.points[n])))
    }

    /// Largest iterate norm over `x_from..=x_to`.
    pub fn sup_norm(&self, from: usize, to: usize) -> f64 {
        self.points[from..=to]
            .iter()
            .map(Point::norm)
            .fold(0.0, f64::max)
    }
}
