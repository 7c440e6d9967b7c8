//! Power-law step sizes and the cumulative algorithmic clock.
//!
//! Steps are indexed from zero: `step(n) = c / (n + 1)^p`, so the first
//! applied step equals `c` and the clock `t(n) = step(0) + ... + step(n-1)`
//! starts at `t(0) = 0`. [`StepSchedule::value`] evaluates the law on the
//! one-based index `n >= 1` directly.

use std::fmt;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub scale: f64,
    pub exponent: f64,
}

/// Outcome of the Robbins–Monro test for a power schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobbinsMonroVerdict {
    /// Steps sum to infinity and their squares are summable.
    Admissible,
    /// Squares are not summable.
    DivergentSumOfSquares,
    /// The steps themselves are summable.
    Summable,
}

#[derive(Debug, Default)]
struct ClockCache {
    // sums[n] = t(n)
    sums: Vec<f64>,
    // Neumaier compensation carried across extensions.
    comp: f64,
    raw: f64,
}

/// `alpha_n = scale / (n+1)^exponent` with a lazily grown prefix-sum cache.
///
/// `exponent = 0` gives a constant schedule; it is accepted for
/// deterministic test recursions but is not Robbins–Monro admissible.
#[derive(Serialize, Deserialize)]
#[serde(try_from = "ScheduleParams", into = "ScheduleParams")]
pub struct StepSchedule {
    params: ScheduleParams,
    cache: RwLock<ClockCache>,
}

impl StepSchedule {
    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(SriError::Config(format!(
                "step scale must be positive and finite, got {scale}"
            )));
        }
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(SriError::Config(format!(
                "step exponent must be finite and nonnegative, got {exponent}"
            )));
        }
        Ok(StepSchedule {
            params: ScheduleParams { scale, exponent },
            cache: RwLock::new(ClockCache {
                sums: vec![0.0],
                comp: 0.0,
                raw: 0.0,
            }),
        })
    }

    pub fn constant(step: f64) -> Result<Self> {
        Self::power(step, 0.0)
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn scale(&self) -> f64 {
        self.params.scale
    }

    pub fn exponent(&self) -> f64 {
        self.params.exponent
    }

    /// The law `c / n^p` on a one-based index.
    pub fn value(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(SriError::Domain(
                "the step law is indexed from n = 1".into(),
            ));
        }
        Ok(self.law(n as f64))
    }

    fn law(&self, n: f64) -> f64 {
        if self.params.exponent == 0.0 {
            self.params.scale
        } else {
            self.params.scale / n.powf(self.params.exponent)
        }
    }

    /// Zero-based step `alpha_n = value(n + 1)`.
    pub fn step(&self, n: usize) -> f64 {
        self.law(n as f64 + 1.0)
    }

    pub fn robbins_monro_verdict(&self) -> RobbinsMonroVerdict {
        let p = self.params.exponent;
        if p > 1.0 {
            RobbinsMonroVerdict::Summable
        } else if p > 0.5 {
            RobbinsMonroVerdict::Admissible
        } else {
            RobbinsMonroVerdict::DivergentSumOfSquares
        }
    }

    fn ensure(&self, n: usize) {
        if self.cache.read().expect("clock cache poisoned").sums.len() > n {
            return;
        }
        let mut cache = self.cache.write().expect("clock cache poisoned");
        let have = cache.sums.len();
        if have > n {
            return;
        }
        let target = (n + 1).max(have * 2).max(1024);
        cache.sums.reserve(target - have);
        let (mut sum, mut comp) = (cache.raw, cache.comp);
        for k in (have - 1)..(target - 1) {
            let a = self.step(k);
            let t = sum + a;
            if sum.abs() >= a.abs() {
                comp += (sum - t) + a;
            } else {
                comp += (a - t) + sum;
            }
            sum = t;
            cache.sums.push(sum + comp);
        }
        cache.raw = sum;
        cache.comp = comp;
    }

    /// `t(n) = alpha_0 + ... + alpha_{n-1}`, with `t(0) = 0`.
    pub fn clock(&self, n: usize) -> f64 {
        self.ensure(n);
        self.cache.read().expect("clock cache poisoned").sums[n]
    }

    /// Clock values `t(0..=n)`.
    pub fn clock_prefix(&self, n: usize) -> Vec<f64> {
        self.ensure(n);
        self.cache.read().expect("clock cache poisoned").sums[..=n].to_vec()
    }

    /// Largest `n <= max_n` with `t(n) <= t`.
    pub fn index_at(&self, t: f64, max_n: usize) -> usize {
        self.ensure(max_n);
        let cache = self.cache.read().expect("clock cache poisoned");
        let sums = &cache.sums[..=max_n];
        match sums.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        }
    }

    /// Smallest `m` with `t(n + m) >= t(n) + horizon`, searching up to `n + m <= max_index`.
    pub fn steps_to_cover(&self, n: usize, horizon: f64, max_index: usize) -> Option<usize> {
        if max_index < n {
            return None;
        }
        self.ensure(max_index);
        let cache = self.cache.read().expect("clock cache poisoned");
        let target = cache.sums[n] + horizon;
        let window = &cache.sums[n..=max_index];
        let k = window.partition_point(|&s| s < target);
        (k < window.len()).then_some(k)
    }

    /// `sum_{k=n}^{n+m-1} alpha_k^2`.
    pub fn sum_of_squares(&self, n: usize, m: usize) -> f64 {
        (n..n + m).map(|k| self.step(k).powi(2)).sum()
    }
}

impl Clone for StepSchedule {
    fn clone(&self) -> Self {
        StepSchedule::power(self.params.scale, self.params.exponent)
            .expect("parameters were validated")
    }
}

impl fmt::Debug for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "StepSchedule({}/(n+1)^{})",
            self.params.scale, self.params.exponent
        )
    }
}

impl PartialEq for StepSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl TryFrom<ScheduleParams> for StepSchedule {
    type Error = SriError;
    fn try_from(p: ScheduleParams) -> Result<Self> {
        StepSchedule::power(p.scale, p.exponent)
    }
}

impl From<StepSchedule> for ScheduleParams {
    fn from(s: StepSchedule) -> Self {
        s.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_examples() {
        let s = StepSchedule::power(0.01, 0.6).unwrap();
        assert_eq!(s.value(1).unwrap(), 0.01);
        assert!(matches!(s.value(0), Err(SriError::Domain(_))));
        let h = StepSchedule::power(1.0, 1.0).unwrap();
        assert!((h.value(10).unwrap() - 0.1).abs() < 1e-16);
        // 100000^0.6 = 10^3 exactly, so the law gives 1e-5.
        let v = s.value(100_000).unwrap();
        assert!((v - 1e-5).abs() / 1e-5 < 1e-14, "{v}");
    }

    #[test]
    fn verdicts() {
        let v = |p| StepSchedule::power(1.0, p).unwrap().robbins_monro_verdict();
        assert_eq!(v(0.6), RobbinsMonroVerdict::Admissible);
        assert_eq!(v(1.0), RobbinsMonroVerdict::Admissible);
        assert_eq!(v(0.4), RobbinsMonroVerdict::DivergentSumOfSquares);
        assert_eq!(v(0.5), RobbinsMonroVerdict::DivergentSumOfSquares);
        assert_eq!(v(1.5), RobbinsMonroVerdict::Summable);
        assert_eq!(v(0.0), RobbinsMonroVerdict::DivergentSumOfSquares);
    }

    #[test]
    fn clock_uses_zero_based_steps() {
        let h = StepSchedule::power(1.0, 1.0).unwrap();
        assert_eq!(h.clock(0), 0.0);
        assert_eq!(h.clock(1), 1.0);
        assert_eq!(h.clock(2), 1.5);
        // Direct summation oracle.
        let direct: f64 = (0..37).map(|k| 1.0 / (k as f64 + 1.0)).sum();
        assert!((h.clock(37) - direct).abs() < 1e-13);
    }

    #[test]
    fn clock_grows_without_bound_to_one_million() {
        let s = StepSchedule::power(0.01, 0.6).unwrap();
        let ts = s.clock_prefix(1_000_000);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        for (n, w) in ts.windows(2).enumerate().step_by(9973) {
            assert!(((w[1] - w[0]) - s.step(n)).abs() < 1e-12);
        }
        // t(n) ~ c (n^{1-p}) / (1-p) for large n.
        let approx = 0.01 * (1e6f64).powf(0.4) / 0.4;
        assert!((ts[1_000_000] / approx - 1.0).abs() < 0.02);
    }

    #[test]
    fn index_and_cover() {
        let s = StepSchedule::power(1.0, 1.0).unwrap();
        assert_eq!(s.index_at(0.0, 10), 0);
        assert_eq!(s.index_at(1.2, 10), 1);
        assert_eq!(s.index_at(1.5, 10), 2);
        assert_eq!(s.index_at(1e9, 10), 10);
        // t(1) = 1, t(3) = 1 + 1/2 + 1/3 = 1.833 >= 1 + 0.8
        assert_eq!(s.steps_to_cover(1, 0.8, 100), Some(2));
        assert_eq!(s.steps_to_cover(1, 1e6, 100), None);
    }

    #[test]
    fn constant_schedule() {
        let s = StepSchedule::constant(0.1).unwrap();
        assert_eq!(s.step(0), 0.1);
        assert_eq!(s.step(1000), 0.1);
        assert!((s.clock(10) - 1.0).abs() < 1e-15);
        assert!(StepSchedule::power(0.0, 0.6).is_err());
        assert!(StepSchedule::power(1.0, -0.1).is_err());
    }
}
