use std::sync::Arc;

use crate::dynamics::DIVERGENCE_NORM;
use crate::error::{Result, SriError};
use crate::geometry::ConvexSet;
use crate::oracles::{
    biased_subgradient, BiasDirection, BiasModel, Problem, VectorFn, ZoEstimatorConfig,
};
use crate::oracles::{conditional_mean, zo_gradient};
use crate::point::Point;
use crate::random::RandomSource;
use crate::schedule::StepSchedule;
use crate::trace::{StepRecord, Trace};

use super::config::{Algorithm, ExperimentConfig, OracleMode};
use super::monitor::{monitor, RunSummary};

/// Slack on the projected-step audit `|eta| <= 2 |g|`.
const ETA_AUDIT_SLACK: f64 = 1e-9;

enum Oracle {
    Zo {
        problem: Problem,
        cfg: ZoEstimatorConfig,
        decomposable: bool,
    },
    Exact(VectorFn),
    Biased {
        problem: Problem,
        model: BiasModel,
        lambda: f64,
        direction: BiasDirection,
    },
}

impl Oracle {
    fn build(cfg: &ExperimentConfig, problem: &Problem, lambda: f64) -> Result<Self> {
        Ok(match &cfg.oracle {
            OracleMode::Zo => {
                let zo = cfg.zo_config(lambda)?;
                let decomposable =
                    problem.has_gradient() && conditional_mean(problem, &zo, &cfg.x0).is_some();
                Oracle::Zo {
                    problem: problem.clone(),
                    cfg: zo,
                    decomposable,
                }
            }
            OracleMode::ExactGradient => Oracle::Exact(problem.require_subgradient()?),
            OracleMode::BiasedSubgradient { model, direction } => Oracle::Biased {
                problem: problem.clone(),
                model: *model,
                lambda,
                direction: direction.clone(),
            },
        })
    }

    /// One descent direction with the inclusion noise and bias when they are known.
    fn draw(&self, x: &Point, rng: &mut RandomSource) -> Result<StepRecord> {
        match self {
            Oracle::Zo {
                problem,
                cfg,
                decomposable,
            } => {
                let draw = zo_gradient(problem, cfg, x, rng)?;
                let mut rec = StepRecord::estimate_only(draw.estimate);
                rec.probe = Some(draw.probe);
                if *decomposable {
                    let mean = conditional_mean(problem, cfg, x).expect("checked at build time");
                    let grad = problem.gradient(x).expect("checked at build time");
                    rec.noise = Some(&mean - &rec.estimate);
                    rec.bias = Some(&grad - &mean);
                }
                Ok(rec)
            }
            Oracle::Exact(g) => {
                let est = g(x);
                let d = est.dim();
                Ok(StepRecord {
                    estimate: est,
                    noise: Some(Point::zeros(d)),
                    bias: Some(Point::zeros(d)),
                    normal: None,
                    probe: None,
                })
            }
            Oracle::Biased {
                problem,
                model,
                lambda,
                direction,
            } => {
                let d = biased_subgradient(problem, model, *lambda, direction, x, rng)?;
                Ok(StepRecord {
                    estimate: d.value,
                    noise: Some(-&d.noise),
                    bias: Some(-&d.bias),
                    normal: None,
                    probe: None,
                })
            }
        }
    }
}

fn guard(n: usize, tr: &Trace, next: &Point) -> Result<()> {
    if !next.is_finite() || next.norm() > DIVERGENCE_NORM {
        return Err(SriError::Divergence {
            index: n,
            time: tr.clock(n),
            reason: format!("iterate norm {} exceeds {DIVERGENCE_NORM:e}", next.norm()),
        });
    }
    Ok(())
}

fn prepare(cfg: &ExperimentConfig) -> Result<(Problem, Arc<StepSchedule>)> {
    cfg.validate()?;
    Ok((cfg.problem.build()?, Arc::new(cfg.schedule())))
}

/// `x_{n+1} = x_n - alpha_n g_n` with `g_n` from the configured oracle.
///
/// In the default zeroth-order mode the record holds the raw estimate and
/// probe; when the conditional mean has a closed form it also holds
/// `M_{n+1} = E[g_n | x_n] - g_n` and `b_n = grad f(x_n) - E[g_n | x_n]`.
pub fn zo_sgd_trace(cfg: &ExperimentConfig, lambda: f64, seed: u64) -> Result<Trace> {
    let (problem, sched) = prepare(cfg)?;
    let oracle = Oracle::build(cfg, &problem, lambda)?;
    let mut rng = RandomSource::for_cell(seed, lambda, 0);
    let mut tr = Trace::with_capacity(cfg.x0.clone(), sched, seed, cfg.iterations)?;
    let mut x = cfg.x0.clone();
    for n in 0..cfg.iterations {
        let rec = oracle.draw(&x, &mut rng)?;
        let next = x.axpy(-tr.alpha(n), &rec.estimate);
        guard(n, &tr, &next)?;
        tr.push(rec, next.clone())?;
        x = next;
    }
    Ok(tr)
}

pub fn run_zo_sgd(cfg: &ExperimentConfig, lambda: f64, seed: u64) -> Result<(Trace, RunSummary)> {
    let tr = zo_sgd_trace(cfg, lambda, seed)?;
    let summary = summarize(cfg, lambda, &tr)?;
    Ok((tr, summary))
}

/// `x_{n+1} = P_X(x_n - alpha_n g_n)`. The realized normal element
/// `eta_n = -g_n - (x_{n+1} - x_n) / alpha_n` goes into `StepRecord::normal`.
pub fn projected_subgrad_trace(cfg: &ExperimentConfig, lambda: f64, seed: u64) -> Result<Trace> {
    let (problem, sched) = prepare(cfg)?;
    let set: &ConvexSet = cfg
        .set
        .as_ref()
        .ok_or_else(|| SriError::Config("projected_subgrad needs a feasible set".into()))?;
    let oracle = Oracle::build(cfg, &problem, lambda)?;
    let mut rng = RandomSource::for_cell(seed, lambda, 0);
    let mut tr = Trace::with_capacity(cfg.x0.clone(), sched, seed, cfg.iterations)?;
    let mut x = cfg.x0.clone();
    for n in 0..cfg.iterations {
        let mut rec = oracle.draw(&x, &mut rng)?;
        let a = tr.alpha(n);
        let next = set.project(&x.axpy(-a, &rec.estimate))?;
        guard(n, &tr, &next)?;
        let eta = &(-&rec.estimate) - &(&next - &x).scale(1.0 / a);
        let cap = 2.0 * rec.estimate.norm();
        if eta.norm() > cap * (1.0 + ETA_AUDIT_SLACK) + ETA_AUDIT_SLACK {
            return Err(SriError::Consistency(format!(
                "step {n}: |eta| = {} exceeds 2|g| = {cap}",
                eta.norm()
            )));
        }
        rec.normal = Some(eta);
        tr.push(rec, next.clone())?;
        x = next;
    }
    Ok(tr)
}

pub fn run_projected_subgrad(
    cfg: &ExperimentConfig,
    lambda: f64,
    seed: u64,
) -> Result<(Trace, RunSummary)> {
    let tr = projected_subgrad_trace(cfg, lambda, seed)?;
    let summary = summarize(cfg, lambda, &tr)?;
    Ok((tr, summary))
}

/// Dispatches on `cfg.algorithm`.
pub fn run_cell(cfg: &ExperimentConfig, lambda: f64, seed: u64) -> Result<(Trace, RunSummary)> {
    match cfg.algorithm {
        Algorithm::ZoSgd => run_zo_sgd(cfg, lambda, seed),
        Algorithm::ProjectedSubgrad => run_projected_subgrad(cfg, lambda, seed),
    }
}

fn summarize(cfg: &ExperimentConfig, lambda: f64, tr: &Trace) -> Result<RunSummary> {
    let problem = cfg.problem.build()?;
    let mut deltas = cfg.deltas.clone();
    if !deltas.contains(&0.05) {
        deltas.push(0.05);
    }
    Ok(monitor(
        tr,
        &problem,
        lambda,
        &cfg.radii,
        &deltas,
        cfg.decimation,
        cfg.bound_radius,
    ))
}

/// Largest single-step displacement `|x_{n+1} - x_n|` over the first `steps` steps.
pub fn oscillation_amplitude(tr: &Trace, steps: usize) -> f64 {
    tr.points()
        .windows(2)
        .take(steps)
        .map(|w| w[1].distance(&w[0]))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ProblemSpec;
    use crate::oracles::NoiseSpec;
    use crate::pt;
    use crate::schedule::ScheduleParams;

    fn base(problem: ProblemSpec, x0: Point, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            problem,
            x0,
            iterations: n,
            schedule: ScheduleParams {
                scale: 0.1,
                exponent: 0.0,
            },
            noise: NoiseSpec::NOISELESS,
            seeds: vec![0],
            lambdas: vec![0.1],
            oracle: OracleMode::ExactGradient,
            ..ExperimentConfig::fig1()
        }
    }

    #[test]
    fn exact_gradient_contraction_closed_form() {
        let cfg = base(ProblemSpec::SquaredNorm { dim: 2 }, pt![1.0, 1.0], 60);
        let (tr, s) = run_zo_sgd(&cfg, 0.1, 0).unwrap();
        for n in [0, 1, 5, 30, 60] {
            let e = 0.8f64.powi(n as i32);
            assert!(
                tr.point(n).distance(&pt![e, e]) < 1e-14 * (1.0 + e),
                "n = {n}"
            );
        }
        assert!(s.final_gap.unwrap() < 1e-10);
        assert!(s.bounded);
    }

    #[test]
    fn zo_records_decompose_the_step() {
        let mut cfg = ExperimentConfig::fig1();
        cfg.iterations = 500;
        let tr = zo_sgd_trace(&cfg, 0.1, 3).unwrap();
        let p = cfg.problem.build().unwrap();
        for n in [0, 17, 499] {
            let rec = tr.step(n);
            let grad = p.gradient(tr.point(n)).unwrap();
            // -increment = estimate = grad - b - M
            let rebuilt = &(&grad - rec.bias.as_ref().unwrap()) - rec.noise.as_ref().unwrap();
            assert!(rebuilt.distance(&rec.estimate) < 1e-9 * (1.0 + rec.estimate.norm()));
            assert!(tr.increment(n).distance(&-&rec.estimate) < 1e-6 * (1.0 + rec.estimate.norm()));
            let probe = rec.probe.as_ref().unwrap();
            let quotient = (probe.value_plus - probe.value_minus) / 0.2;
            assert!(
                probe.direction.scale(quotient).distance(&rec.estimate)
                    < 1e-12 * (1.0 + rec.estimate.norm())
            );
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let mut cfg = ExperimentConfig::fig1();
        cfg.iterations = 2000;
        let a = zo_sgd_trace(&cfg, 0.05, 4).unwrap();
        let b = zo_sgd_trace(&cfg, 0.05, 4).unwrap();
        assert_eq!(a.points(), b.points());
        let c = zo_sgd_trace(&cfg, 0.05, 5).unwrap();
        assert_ne!(a.last(), c.last());
    }

    #[test]
    fn divergence_is_structured() {
        let mut cfg = base(ProblemSpec::SquaredNorm { dim: 2 }, pt![1.0, 1.0], 500);
        cfg.schedule.scale = 1.5; // x_{n+1} = -2 x_n
        match zo_sgd_trace(&cfg, 0.1, 0) {
            Err(SriError::Divergence { index, .. }) => {
                // 2^n sqrt 2 first exceeds 1e12 at n = 40
                assert_eq!(index, 39);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn small_lambda_oscillates() {
        let mut cfg = ExperimentConfig::fig1();
        cfg.iterations = 1000;
        let wild = zo_sgd_trace(&cfg, 0.0005, 0).unwrap();
        let calm = zo_sgd_trace(&cfg, 0.05, 0).unwrap();
        assert!(oscillation_amplitude(&wild, 1000) >= 10.0 * oscillation_amplitude(&calm, 1000));
    }

    #[test]
    fn interior_projection_is_plain_descent() {
        let mut cfg = base(ProblemSpec::SquaredNorm { dim: 2 }, pt![0.5, -0.5], 100);
        cfg.algorithm = Algorithm::ProjectedSubgrad;
        cfg.set = Some(ConvexSet::new_ball(Point::zeros(2), 10.0).unwrap());
        let (tr, _) = run_projected_subgrad(&cfg, 0.1, 0).unwrap();
        let free = zo_sgd_trace(
            &ExperimentConfig {
                algorithm: Algorithm::ZoSgd,
                ..cfg.clone()
            },
            0.1,
            0,
        )
        .unwrap();
        for n in 0..100 {
            assert!(tr.step(n).normal.as_ref().unwrap().norm() < 1e-12);
            assert!(tr.point(n + 1).distance(free.point(n + 1)) < 1e-15);
        }
    }

    #[test]
    fn linear_objective_on_box_reaches_optimal_face() {
        let c = pt![1.0, -2.0];
        let mut cfg = base(ProblemSpec::Linear { c: c.clone() }, pt![0.3, 0.1], 400);
        cfg.algorithm = Algorithm::ProjectedSubgrad;
        cfg.schedule = ScheduleParams {
            scale: 0.5,
            exponent: 0.6,
        };
        let set = ConvexSet::new_box(vec![-1.0, -1.0], vec![2.0, 1.0]).unwrap();
        cfg.set = Some(set);
        let tr = projected_subgrad_trace(&cfg, 0.1, 0).unwrap();
        // Vertex enumeration for the LP minimum of <c, x> over the box.
        let vertices = [
            pt![-1.0, -1.0],
            pt![-1.0, 1.0],
            pt![2.0, -1.0],
            pt![2.0, 1.0],
        ];
        let best = vertices
            .iter()
            .map(|v| c.dot(v))
            .fold(f64::INFINITY, f64::min);
        let hit = (0..=400)
            .find(|&n| (c.dot(tr.point(n)) - best).abs() < 1e-12)
            .expect("reaches the face");
        for n in hit..=400 {
            assert!((c.dot(tr.point(n)) - best).abs() < 1e-12);
            assert!(tr.point(n).distance(&pt![-1.0, 1.0]) < 1e-12);
        }
        for s in tr.steps() {
            assert!(s.normal.as_ref().unwrap().norm() <= 2.0 * s.estimate.norm() + 1e-12);
        }
    }

    #[test]
    fn biased_quadratic_on_ball_tracks_epsilon() {
        // eps(lambda) = 0.02/lambda + 0.02 lambda, minimal at lambda* = 1.
        let model = BiasModel::new(0.02, 0.02, 1e-4).unwrap();
        let mut cfg = base(
            ProblemSpec::Quadratic {
                matrix: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
                linear: vec![-1.0, 0.5],
            },
            pt![0.0, 0.0],
            20_000,
        );
        cfg.algorithm = Algorithm::ProjectedSubgrad;
        cfg.set = Some(ConvexSet::new_ball(Point::zeros(2), 2.0).unwrap());
        cfg.schedule = ScheduleParams {
            scale: 0.1,
            exponent: 0.6,
        };
        cfg.oracle = OracleMode::BiasedSubgradient {
            model,
            direction: BiasDirection::FirstAxis,
        };
        let x_star = cfg.problem.build().unwrap().minimizer().unwrap().clone();
        let median_distance = |lambda: f64| {
            let mut d: Vec<f64> = (0..5)
                .map(|s| {
                    projected_subgrad_trace(&cfg, lambda, s)
                        .unwrap()
                        .last()
                        .distance(&x_star)
                })
                .collect();
            d.sort_by(f64::total_cmp);
            d[2]
        };
        // lambda grid walking towards lambda*: eps = 2.0, 0.41, 0.2, 0.04
        let grid = [0.01, 0.05, 0.1, 1.0];
        let dist: Vec<f64> = grid.iter().map(|&l| median_distance(l)).collect();
        assert!(dist.windows(2).all(|w| w[1] < w[0]), "{dist:?}");
    }
}
