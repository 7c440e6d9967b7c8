//! Stochastic recursive inclusions: noisy oracles, convex geometry,
//! differential inclusions, assumption certification and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod dynamics;
mod error;
pub mod geometry;
pub mod harness;
pub mod oracles;
mod point;
mod random;
mod schedule;
mod trace;

pub use error::{Result, SriError};
pub use geometry::ConvexSet;
pub use point::Point;
pub use random::RandomSource;
pub use schedule::{RobbinsMonroVerdict, ScheduleParams, StepSchedule};
pub use trace::{Probe, StepRecord, Trace};
