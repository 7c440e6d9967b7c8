//! Continuous-time side: explicit Euler integration of `x' in h(x) + B(0, eps)`
//! and of the projected inclusion, deviation of an interpolated trace from
//! the flow, the finite-horizon certificate and noise tail sums.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Result, SriError};
use crate::geometry::ConvexSet;
use crate::oracles::VectorFn;
use crate::point::Point;
use crate::trace::Trace;

/// States with norm above this are reported as a blow-up.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Default integrator resolution for trace comparisons.
pub const DEFAULT_MAX_DT: f64 = 1e-4;
/// Every trace interval gets at least this many integrator steps.
pub const MIN_SUBSTEPS: usize = 10;

pub type TimeSelectionFn = Arc<dyn Fn(f64) -> Point + Send + Sync>;

#[derive(Clone)]
pub enum Drift {
    Field(VectorFn),
    /// `x' in -g(x) + b - N_X(x)`, integrated by projected Euler.
    /// `normal_bound` is the truncation radius `G` of the normal cone.
    Constrained {
        subgradient: VectorFn,
        set: ConvexSet,
        normal_bound: f64,
    },
}

/// Measurable selection `b(t)` from the closed ball of radius epsilon.
/// Every variant is clamped to that ball when evaluated.
#[derive(Clone)]
pub enum BiasSelection {
    Zero,
    Constant(Point),
    /// `b = eps * grad V(x) / |grad V(x)|`, zero where the gradient vanishes.
    AdversarialWrt(VectorFn),
    TimeVarying(TimeSelectionFn),
    /// `values[i]` on `[knots[i], knots[i+1])`, the last value beyond.
    Piecewise {
        knots: Vec<f64>,
        values: Vec<Point>,
    },
}

impl BiasSelection {
    fn raw(&self, t: f64, x: &Point, eps: f64) -> Point {
        match self {
            BiasSelection::Zero => Point::zeros(x.dim()),
            BiasSelection::Constant(b) => b.clone(),
            BiasSelection::AdversarialWrt(grad_v) => match grad_v(x).normalized() {
                Some(u) => u.scale(eps),
                None => Point::zeros(x.dim()),
            },
            BiasSelection::TimeVarying(f) => f(t),
            BiasSelection::Piecewise { knots, values } => {
                let i = knots.partition_point(|&k| k <= t).saturating_sub(1);
                values[i.min(values.len() - 1)].clone()
            }
        }
    }

    pub fn select(&self, t: f64, x: &Point, eps: f64) -> Point {
        self.raw(t, x, eps).clamp_norm(eps)
    }
}

#[derive(Clone)]
pub struct InclusionSpec {
    pub drift: Drift,
    pub epsilon: f64,
    pub selection: BiasSelection,
    /// Global Lipschitz constant of the drift, needed by the certificate.
    pub lipschitz: Option<f64>,
}

impl InclusionSpec {
    pub fn field(h: impl Fn(&Point) -> Point + Send + Sync + 'static) -> Self {
        InclusionSpec {
            drift: Drift::Field(Arc::new(h)),
            epsilon: 0.0,
            selection: BiasSelection::Zero,
            lipschitz: None,
        }
    }

    /// `h(x) = -x`, Lipschitz with constant 1.
    pub fn contraction() -> Self {
        Self::field(|x: &Point| x.scale(-1.0)).with_lipschitz(1.0)
    }

    pub fn constrained(subgradient: VectorFn, set: ConvexSet, normal_bound: f64) -> Self {
        InclusionSpec {
            drift: Drift::Constrained {
                subgradient,
                set,
                normal_bound,
            },
            epsilon: 0.0,
            selection: BiasSelection::Zero,
            lipschitz: None,
        }
    }

    pub fn with_bias(mut self, epsilon: f64, selection: BiasSelection) -> Self {
        self.epsilon = epsilon;
        self.selection = selection;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(SriError::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if let Some(l) = self.lipschitz {
            if !(l.is_finite() && l >= 0.0) {
                return Err(SriError::Config(format!(
                    "Lipschitz constant must be >= 0, got {l}"
                )));
            }
        }
        Ok(())
    }

    fn check_start(&self, x0: &Point) -> Result<()> {
        if let Drift::Constrained { set, .. } = &self.drift {
            if !set.contains(x0) {
                return Err(SriError::Domain(format!(
                    "initial point {x0} is outside the feasible set"
                )));
            }
        }
        Ok(())
    }

    /// Field value at `x` without the bias.
    pub fn drift_at(&self, x: &Point) -> Point {
        match &self.drift {
            Drift::Field(h) => h(x),
            Drift::Constrained { subgradient, .. } => subgradient(x).scale(-1.0),
        }
    }

    fn euler(&self, x: &Point, t: f64, dt: f64, selection: &BiasSelection) -> Result<Point> {
        let v = &self.drift_at(x) + &selection.select(t, x, self.epsilon);
        let next = x.axpy(dt, &v);
        match &self.drift {
            Drift::Field(_) => Ok(next),
            Drift::Constrained { set, .. } => set.project(&next),
        }
    }
}

fn blow_up(index: usize, time: f64, x: &Point) -> Option<SriError> {
    if !x.is_finite() || x.norm() > DIVERGENCE_NORM {
        Some(SriError::Divergence {
            index,
            time,
            reason: format!("flow state norm {} exceeds {DIVERGENCE_NORM:e}", x.norm()),
        })
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub dt: f64,
}

impl ContinuousTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn endpoint(&self) -> &Point {
        self.states.last().expect("trajectory has a start state")
    }

    /// Linear interpolation between grid states, clamped to the grid.
    pub fn state_at(&self, t: f64) -> Point {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k >= self.times.len() {
            return self.endpoint().clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (&self.states[k - 1], &self.states[k]);
        a.axpy(w, &(b - a))
    }

    pub fn max_norm(&self) -> f64 {
        self.states.iter().map(Point::norm).fold(0.0, f64::max)
    }
}

/// Euler (or projected Euler) solution on `[0, horizon]`.
pub fn integrate(
    spec: &InclusionSpec,
    x0: &Point,
    horizon: f64,
    dt: f64,
) -> Result<ContinuousTrajectory> {
    integrate_from(spec, x0, 0.0, horizon, dt)
}

/// As [`integrate`], starting the clock at `t0`. The last step is shortened
/// so the grid ends exactly at `t0 + horizon`.
pub fn integrate_from(
    spec: &InclusionSpec,
    x0: &Point,
    t0: f64,
    horizon: f64,
    dt: f64,
) -> Result<ContinuousTrajectory> {
    spec.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SriError::Domain(format!(
            "integrator step must be positive, got {dt}"
        )));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(SriError::Domain(format!(
            "horizon must be >= 0, got {horizon}"
        )));
    }
    spec.check_start(x0)?;
    let steps = (horizon / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t0);
    states.push(x0.clone());
    let mut x = x0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let h = if k + 1 == steps { t0 + horizon - t } else { dt };
        x = spec.euler(&x, t, h, &spec.selection)?;
        let t_next = if k + 1 == steps { t0 + horizon } else { t + h };
        if let Some(e) = blow_up(k + 1, t_next, &x) {
            return Err(e);
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(ContinuousTrajectory { times, states, dt })
}

/// `(D0 + (T+1) eps) e^{L (T+1)}`.
pub fn solution_growth_bound(d0: f64, horizon: f64, epsilon: f64, lipschitz: f64) -> f64 {
    (d0 + (horizon + 1.0) * epsilon) * (lipschitz * (horizon + 1.0)).exp()
}

/// Closed-form ISS envelope of `x' = -a x + b`, `|b| <= eps`:
/// `|x(t)| <= |x0| e^{-a t} + eps / a`.
pub fn linear_iss_envelope(x0_norm: f64, rate: f64, epsilon: f64, t: f64) -> f64 {
    x0_norm * (-rate * t).exp() + epsilon / rate
}

/// The bias selection a trace comparison uses: the logged realized bias,
/// piecewise constant on trace intervals, or the configured one.
fn selection_for(tr: &Trace, spec: &InclusionSpec) -> BiasSelection {
    if tr.bias_logged() {
        BiasSelection::Piecewise {
            knots: tr.schedule().clock_prefix(tr.len() - 1),
            values: tr
                .steps()
                .iter()
                .map(|s| s.bias.clone().expect("bias is logged"))
                .collect(),
        }
    } else {
        spec.selection.clone()
    }
}

/// Integrate the flow from `X(t_start)` to `t_start + horizon` on a grid that
/// contains every trace knot, calling `visit(t, interpolated, flow)` at each
/// grid time (the start included).
fn follow_trace(
    tr: &Trace,
    spec: &InclusionSpec,
    t_start: f64,
    horizon: f64,
    max_dt: f64,
    mut visit: impl FnMut(f64, &Point, &Point),
) -> Result<()> {
    spec.validate()?;
    let t_end = t_start + horizon;
    let hi = tr.horizon();
    if t_start < 0.0 || t_end > hi * (1.0 + 1e-12) {
        return Err(SriError::Range {
            value: t_end,
            lo: 0.0,
            hi,
        });
    }
    let t_end = t_end.min(hi);
    let selection = selection_for(tr, spec);
    let mut x = tr.interpolate(t_start)?;
    spec.check_start(&x)?;
    visit(t_start, &x, &x);
    let mut n = tr.segment_at(t_start);
    let mut a = t_start;
    let mut step_index = 0;
    while a < t_end && n < tr.len() {
        let knot = tr.clock(n + 1);
        let b = knot.min(t_end);
        if b > a {
            let (p0, p1) = (tr.point(n), tr.point(n + 1));
            let (s0, s1) = (tr.clock(n), knot);
            let k = MIN_SUBSTEPS.max(((b - a) / max_dt).ceil() as usize);
            let h = (b - a) / k as f64;
            for j in 0..k {
                let t = a + j as f64 * h;
                x = spec.euler(&x, t, h, &selection)?;
                step_index += 1;
                let t1 = if j + 1 == k { b } else { t + h };
                if let Some(e) = blow_up(step_index, t1, &x) {
                    return Err(e);
                }
                let w = (t1 - s0) / (s1 - s0);
                let xbar = p0.axpy(w, &(p1 - p0));
                visit(t1, &xbar, &x);
            }
        }
        a = b;
        n += 1;
    }
    Ok(())
}

/// `sup_{0<=s<=T} |X(t_start + s) - x_{t_start}(s)|` over the trace knots and
/// integrator grid.
pub fn apt_deviation(tr: &Trace, spec: &InclusionSpec, t_start: f64, horizon: f64) -> Result<f64> {
    apt_deviation_with_dt(tr, spec, t_start, horizon, DEFAULT_MAX_DT)
}

pub fn apt_deviation_with_dt(
    tr: &Trace,
    spec: &InclusionSpec,
    t_start: f64,
    horizon: f64,
    max_dt: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    follow_trace(tr, spec, t_start, horizon, max_dt, |_, xbar, flow| {
        worst = worst.max(xbar.distance(flow));
    })?;
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteHorizonCertificate {
    pub n: usize,
    pub horizon: f64,
    pub m: usize,
    pub d: f64,
    pub lipschitz: f64,
    pub epsilon: f64,
    pub c_t: f64,
    pub sum_alpha_sq: f64,
    /// `|sum_{k=0}^{m-1} alpha_{n+k} M_{n+k+1}|`.
    pub psi_norm: f64,
    /// The same sum taken through `k = m`, for the alternative convention.
    pub psi_norm_through_m: Option<f64>,
    pub k_nt: f64,
    pub bound: f64,
    /// `sup_{0<=i<=m} |x_{n+i} - x(t(n+i))|`.
    pub measured: f64,
    pub psi_convention: String,
}

impl FiniteHorizonCertificate {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }
}

/// Certificate with `D` taken as the largest iterate norm over the window.
pub fn finite_horizon_certificate(
    tr: &Trace,
    spec: &InclusionSpec,
    n: usize,
    horizon: f64,
) -> Result<FiniteHorizonCertificate> {
    finite_horizon_certificate_with(tr, spec, n, horizon, None, DEFAULT_MAX_DT)
}

pub fn finite_horizon_certificate_with(
    tr: &Trace,
    spec: &InclusionSpec,
    n: usize,
    horizon: f64,
    radius: Option<f64>,
    max_dt: f64,
) -> Result<FiniteHorizonCertificate> {
    if !matches!(spec.drift, Drift::Field(_)) {
        return Err(SriError::Capability(
            "the certificate needs a single-valued drift".into(),
        ));
    }
    let l = spec
        .lipschitz
        .ok_or_else(|| SriError::Capability("the certificate needs a Lipschitz constant".into()))?;
    if !(horizon > 0.0) {
        return Err(SriError::Domain(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if n >= tr.len() {
        return Err(SriError::Range {
            value: n as f64,
            lo: 0.0,
            hi: tr.len() as f64,
        });
    }
    if !tr.noise_logged() || tr.is_empty() {
        return Err(SriError::Capability("the trace has no logged noise".into()));
    }
    let m = tr
        .schedule()
        .steps_to_cover(n, horizon, tr.len())
        .ok_or_else(|| SriError::Range {
            value: tr.clock(n) + horizon,
            lo: 0.0,
            hi: tr.horizon(),
        })?;
    let d = match radius {
        Some(d) => {
            if tr.point(n).norm() > d {
                return Err(SriError::Domain(format!(
                    "|x_n| = {} exceeds D = {d}",
                    tr.point(n).norm()
                )));
            }
            d
        }
        None => tr.sup_norm(n, n + m),
    };
    let eps = spec.epsilon;
    let grow = (l * (horizon + 1.0)).exp();
    let c_t = l * (d + (horizon + 1.0) * eps) * grow + eps;
    let sum_alpha_sq = tr.schedule().sum_of_squares(n, m);
    let mut psi = Point::zeros(tr.dim());
    for k in n..n + m {
        psi = psi.axpy(tr.alpha(k), tr.noise(k).expect("noise is logged"));
    }
    let psi_norm = psi.norm();
    let psi_norm_through_m = (n + m < tr.len()).then(|| {
        psi.axpy(tr.alpha(n + m), tr.noise(n + m).expect("noise is logged"))
            .norm()
    });
    let k_nt = l * c_t * sum_alpha_sq + 2.0 * eps * (horizon + 1.0) + psi_norm;
    let bound = k_nt * grow;

    let knots: Vec<f64> = (n..=n + m).map(|k| tr.clock(k)).collect();
    let t_start = knots[0];
    let span = knots[m] - t_start;
    let mut measured: f64 = 0.0;
    let mut next = 0;
    follow_trace(tr, spec, t_start, span, max_dt, |t, xbar, flow| {
        while next < knots.len() && knots[next] <= t {
            if knots[next] == t || (t - knots[next]).abs() <= 1e-12 * t.max(1.0) {
                measured = measured.max(xbar.distance(flow));
            }
            next += 1;
        }
    })?;
    Ok(FiniteHorizonCertificate {
        n,
        horizon,
        m,
        d,
        lipschitz: l,
        epsilon: eps,
        c_t,
        sum_alpha_sq,
        psi_norm,
        psi_norm_through_m,
        k_nt,
        bound,
        measured,
        psi_convention: "psi summed over k = 0..m-1; the sum through k = m is reported alongside"
            .into(),
    })
}

/// `sup_{n<=k<N} |sum_{j=n}^{k} alpha_j M_{j+1}|`.
pub fn martingale_tail(tr: &Trace, n: usize) -> Result<f64> {
    if !tr.noise_logged() {
        return Err(SriError::Capability("the trace has no logged noise".into()));
    }
    let mut acc = Point::zeros(tr.dim());
    let mut worst: f64 = 0.0;
    for j in n..tr.len() {
        acc = acc.axpy(tr.alpha(j), tr.noise(j).expect("noise is logged"));
        worst = worst.max(acc.norm());
    }
    Ok(worst)
}
