use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};
use crate::geometry::ConvexSet;
use crate::oracles::problem::{self, Problem};
use crate::oracles::{BiasDirection, BiasModel, DirectionLaw, NoiseSpec, ZoEstimatorConfig};
use crate::point::Point;
use crate::schedule::{ScheduleParams, StepSchedule};

/// Objective selection. `f1`/`f2` are the benchmark pair; the rest are
/// custom test problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ProblemSpec {
    F1,
    F2,
    SquaredNorm {
        dim: usize,
    },
    Quadratic {
        matrix: Vec<Vec<f64>>,
        linear: Vec<f64>,
    },
    Linear {
        c: Point,
    },
    L1Norm {
        dim: usize,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemSpec::F1 => Ok(problem::f1()),
            ProblemSpec::F2 => Ok(problem::f2()),
            ProblemSpec::SquaredNorm { dim } => {
                if *dim == 0 {
                    return Err(SriError::Config("squared_norm needs dim >= 1".into()));
                }
                Ok(problem::squared_norm(*dim))
            }
            ProblemSpec::Quadratic { matrix, linear } => {
                problem::quadratic(matrix.clone(), linear.clone())
            }
            ProblemSpec::Linear { c } => Ok(problem::linear(c.clone())),
            ProblemSpec::L1Norm { dim } => {
                if *dim == 0 {
                    return Err(SriError::Config("l1_norm needs dim >= 1".into()));
                }
                Ok(problem::l1_norm(*dim))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    ZoSgd,
    ProjectedSubgrad,
}

/// Where step directions come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleMode {
    /// Two-point zeroth-order estimator with the configured noise and lambda.
    #[default]
    Zo,
    /// Exact (sub)gradient, no noise.
    ExactGradient,
    /// Subgradient plus a bias of norm `b1/lambda + b2 lambda` and noise of
    /// second moment `b3/lambda^2`.
    BiasedSubgradient {
        model: BiasModel,
        #[serde(default)]
        direction: BiasDirection,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub runs_csv: String,
    pub summary_csv: String,
    pub svg_prefix: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: PathBuf::from("out"),
            runs_csv: "runs.csv".into(),
            summary_csv: "summary.csv".into(),
            svg_prefix: "gap".into(),
        }
    }
}

fn default_radii() -> Vec<f64> {
    vec![1.0]
}

fn default_deltas() -> Vec<f64> {
    vec![0.05]
}

fn default_decimation() -> usize {
    1000
}

fn default_bound_radius() -> f64 {
    1e3
}

fn default_apt_horizon() -> f64 {
    0.5
}

fn default_apt_starts() -> Vec<usize> {
    vec![100, 1000, 10_000]
}

fn default_certify_radius() -> f64 {
    5.0
}

fn default_sweep_samples() -> usize {
    100_000
}

/// Everything needed to run a (lambda x seed) grid. JSON is the canonical
/// file format; see `ExperimentConfig::from_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub oracle: OracleMode,
    pub schedule: ScheduleParams,
    pub lambdas: Vec<f64>,
    pub iterations: usize,
    pub x0: Point,
    #[serde(default = "noiseless")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub direction_law: DirectionLaw,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub set: Option<ConvexSet>,
    /// Radii for recurrence counts around the minimizer (or the origin).
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    /// Gap thresholds for the entry index `n_delta`.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Most gap-trace points kept per run (log-spaced).
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    /// Runs whose iterates stay inside this radius are flagged bounded.
    #[serde(default = "default_bound_radius")]
    pub bound_radius: f64,
    /// Known optimum value to compare the recomputed one against.
    #[serde(default)]
    pub reference_optimum: Option<f64>,
    #[serde(default = "default_apt_horizon")]
    pub apt_horizon: f64,
    #[serde(default = "default_apt_starts")]
    pub apt_starts: Vec<usize>,
    #[serde(default = "default_certify_radius")]
    pub certify_radius: f64,
    #[serde(default = "default_sweep_samples")]
    pub sweep_samples: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_name() -> String {
    "experiment".into()
}

fn noiseless() -> NoiseSpec {
    NoiseSpec::NOISELESS
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)
            .map_err(|e| SriError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SriError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(SriError::Config("iterations must be >= 1".into()));
        }
        if self.lambdas.is_empty() {
            return Err(SriError::Config("lambdas must be nonempty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(SriError::Config(format!(
                "lambda must be positive, got {l}"
            )));
        }
        if self.seeds.is_empty() {
            return Err(SriError::Config("seeds must be nonempty".into()));
        }
        StepSchedule::power(self.schedule.scale, self.schedule.exponent)?;
        self.noise.validate()?;
        let p = self.problem.build()?;
        if self.x0.dim() != p.dim() {
            return Err(SriError::Config(format!(
                "x0 has dimension {}, problem `{}` has dimension {}",
                self.x0.dim(),
                p.name(),
                p.dim()
            )));
        }
        if let Some(set) = &self.set {
            set.validate()?;
            if set.dim() != p.dim() {
                return Err(SriError::Config(
                    "feasible set dimension differs from the problem".into(),
                ));
            }
        }
        if self.algorithm == Algorithm::ProjectedSubgrad {
            let set = self
                .set
                .as_ref()
                .ok_or_else(|| SriError::Config("projected_subgrad needs a feasible set".into()))?;
            if !set.contains(&self.x0) {
                return Err(SriError::Config(format!(
                    "x0 = {} is outside the feasible set",
                    self.x0
                )));
            }
        }
        if self
            .radii
            .iter()
            .chain(&self.deltas)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(SriError::Config("radii and deltas must be positive".into()));
        }
        if self.decimation < 2 {
            return Err(SriError::Config(
                "decimation must keep at least 2 points".into(),
            ));
        }
        if !(self.apt_horizon > 0.0) || !(self.certify_radius > 0.0) {
            return Err(SriError::Config(
                "apt_horizon and certify_radius must be positive".into(),
            ));
        }
        if let OracleMode::BiasedSubgradient { model, .. } = &self.oracle {
            BiasModel::new(model.b1, model.b2, model.b3)?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule::power(self.schedule.scale, self.schedule.exponent)
            .expect("validated schedule")
    }

    pub fn zo_config(&self, lambda: f64) -> Result<ZoEstimatorConfig> {
        ZoEstimatorConfig::new(lambda, self.direction_law, self.noise)
    }

    /// Benchmark run on `f1` with step `0.01 / n^0.6`, start `(1, 1)`, query
    /// noise N(5, 1) / N(1, 1) and 10 seeds.
    pub fn fig1() -> Self {
        ExperimentConfig {
            name: "fig1".into(),
            problem: ProblemSpec::F1,
            algorithm: Algorithm::ZoSgd,
            oracle: OracleMode::Zo,
            schedule: ScheduleParams {
                scale: 0.01,
                exponent: 0.6,
            },
            lambdas: vec![0.0005, 0.05, 0.1, 1.0],
            iterations: 100_000,
            x0: Point::from_vec(vec![1.0, 1.0]),
            noise: NoiseSpec {
                mean_plus: 5.0,
                mean_minus: 1.0,
                sigma: 1.0,
            },
            direction_law: DirectionLaw::GaussianIsotropic,
            seeds: (0..10).collect(),
            set: None,
            radii: default_radii(),
            deltas: default_deltas(),
            decimation: default_decimation(),
            bound_radius: default_bound_radius(),
            reference_optimum: Some(-0.231),
            apt_horizon: default_apt_horizon(),
            apt_starts: default_apt_starts(),
            certify_radius: default_certify_radius(),
            sweep_samples: default_sweep_samples(),
            output: OutputPaths {
                dir: PathBuf::from("out/fig1"),
                ..OutputPaths::default()
            },
        }
    }

    /// Same settings on `f2`.
    pub fn fig2() -> Self {
        ExperimentConfig {
            name: "fig2".into(),
            problem: ProblemSpec::F2,
            lambdas: vec![0.05, 0.1, 1.0],
            reference_optimum: Some(-0.481),
            output: OutputPaths {
                dir: PathBuf::from("out/fig2"),
                ..OutputPaths::default()
            },
            ..Self::fig1()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(Self::fig1()),
            "fig2" => Ok(Self::fig2()),
            other => Err(SriError::Config(format!(
                "unknown preset `{other}` (expected fig1 or fig2)"
            ))),
        }
    }
}
