use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};
use crate::oracles::Problem;
use crate::point::Point;
use crate::trace::Trace;

/// One decimated sample of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub n: usize,
    pub gap: Option<f64>,
    /// `max_{k<=n} |x_k|`.
    pub sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitCount {
    pub radius: f64,
    pub count: usize,
    pub last_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryIndex {
    pub delta: f64,
    /// Smallest `n` with `gap(x_k) < delta` for every `k` in `n..=N`.
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub lambda: f64,
    pub seed: u64,
    pub iterations: usize,
    /// `|f(x_N) - f*|`, absent when the problem has no reference optimum.
    pub final_gap: Option<f64>,
    pub gap_trace: Vec<GapSample>,
    pub sup_norm: f64,
    pub bounded: bool,
    /// Visits to `{|x - center| <= R}`; the center is the minimizer if known, else the origin.
    pub visits: Vec<VisitCount>,
    pub entry: Vec<EntryIndex>,
    /// Largest `|eta_n| / |g_n|` over projected steps.
    pub eta_ratio: Option<f64>,
}

impl RunSummary {
    pub fn entry_index(&self, delta: f64) -> Option<Option<usize>> {
        self.entry
            .iter()
            .find(|e| e.delta == delta)
            .map(|e| e.index)
    }
}

/// Up to `keep` indices in `0..=last`, log-spaced, always including both ends.
pub fn log_spaced_indices(last: usize, keep: usize) -> Vec<usize> {
    if last < keep {
        return (0..=last).collect();
    }
    let mut out = vec![0];
    let top = (last as f64).ln();
    for i in 0..keep.saturating_sub(1) {
        let v = (top * i as f64 / (keep - 2) as f64).exp().round() as usize;
        let v = v.min(last);
        if v > *out.last().unwrap() {
            out.push(v);
        }
    }
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

pub fn monitor(
    tr: &Trace,
    problem: &Problem,
    lambda: f64,
    radii: &[f64],
    deltas: &[f64],
    keep: usize,
    bound_radius: f64,
) -> RunSummary {
    let pts = tr.points();
    let gaps: Option<Vec<f64>> = problem.optimum_value().map(|_| {
        pts.iter()
            .map(|x| problem.gap(x).expect("optimum known"))
            .collect()
    });

    let mut running = Vec::with_capacity(pts.len());
    let mut sup: f64 = 0.0;
    for x in pts {
        sup = sup.max(x.norm());
        running.push(sup);
    }

    let gap_trace = log_spaced_indices(tr.len(), keep)
        .into_iter()
        .map(|n| GapSample {
            n,
            gap: gaps.as_ref().map(|g| g[n]),
            sup_norm: running[n],
        })
        .collect();

    let center = problem
        .minimizer()
        .cloned()
        .unwrap_or_else(|| Point::zeros(tr.dim()));
    let visits = radii
        .iter()
        .map(|&r| {
            let mut count = 0;
            let mut last_index = None;
            for (n, x) in pts.iter().enumerate() {
                if x.distance(&center) <= r {
                    count += 1;
                    last_index = Some(n);
                }
            }
            VisitCount {
                radius: r,
                count,
                last_index,
            }
        })
        .collect();

    let entry = deltas
        .iter()
        .map(|&delta| EntryIndex {
            delta,
            index: gaps.as_ref().and_then(|g| entry_index(g, delta)),
        })
        .collect();

    let eta_ratio = tr
        .steps()
        .iter()
        .filter_map(|s| {
            s.normal.as_ref().map(|eta| {
                let g = s.estimate.norm();
                if g > 0.0 {
                    eta.norm() / g
                } else {
                    0.0
                }
            })
        })
        .reduce(f64::max);

    RunSummary {
        lambda,
        seed: tr.seed(),
        iterations: tr.len(),
        final_gap: gaps.as_ref().map(|g| g[tr.len()]),
        gap_trace,
        sup_norm: sup,
        bounded: sup.is_finite() && sup <= bound_radius,
        visits,
        entry,
        eta_ratio,
    }
}

fn entry_index(gaps: &[f64], delta: f64) -> Option<usize> {
    let mut first = None;
    for (n, g) in gaps.iter().enumerate().rev() {
        if *g < delta {
            first = Some(n);
        } else {
            break;
        }
    }
    first
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipAudit {
    pub epsilon: f64,
    pub worst_residual: f64,
    pub steps: usize,
    /// Steps with a strictly positive residual, with that residual.
    pub violations: Vec<(usize, f64)>,
}

impl MembershipAudit {
    pub fn clean_fraction(&self) -> f64 {
        if self.steps == 0 {
            return 1.0;
        }
        1.0 - self.violations.len() as f64 / self.steps as f64
    }
}

/// `max_n max(0, |(x_{n+1} - x_n)/alpha_n - M_{n+1} - h(x_n)| - eps)` with every
/// offending step listed.
pub fn sri_membership(
    tr: &Trace,
    h: &dyn Fn(&Point) -> Point,
    eps: f64,
) -> Result<MembershipAudit> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(SriError::Domain(format!("epsilon must be >= 0, got {eps}")));
    }
    if tr.is_empty() || !tr.noise_logged() {
        return Err(SriError::Capability(
            "membership audit needs the reconstructed noise on every step".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for n in 0..tr.len() {
        let m = tr.noise(n).expect("noise is logged");
        let r = &(&tr.increment(n) - m) - &h(tr.point(n));
        let res = (r.norm() - eps).max(0.0);
        if res > 0.0 {
            violations.push((n, res));
        }
        worst = worst.max(res);
    }
    Ok(MembershipAudit {
        epsilon: eps,
        worst_residual: worst,
        steps: tr.len(),
        violations,
    })
}
