use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    check_iss_constrained, check_pl, check_quadratic_growth, check_strong_monotonicity,
    estimate_lipschitz, fit_pl, fit_quadratic_growth, AssumptionReport, SamplingPlan,
};
use crate::dynamics::{apt_deviation, martingale_tail, BiasSelection, InclusionSpec};
use crate::error::{Result, SriError};
use crate::geometry::ConvexSet;
use crate::point::Point;

use super::config::{Algorithm, ExperimentConfig};
use super::drivers::{projected_subgrad_trace, zo_sgd_trace};
use super::experiment::{csv_bytes, write_file};

/// Modulus tried when no strong-monotonicity constant is known or fitted.
pub const PROBE_MODULUS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub check: String,
    pub report: Option<AssumptionReport>,
    pub skipped: Option<String>,
}

impl SuiteEntry {
    fn from(check: &str, r: Result<AssumptionReport>) -> Self {
        match r {
            Ok(report) => SuiteEntry {
                check: check.into(),
                report: Some(report),
                skipped: None,
            },
            Err(e) => Self::skip(check, e.to_string()),
        }
    }

    fn skip(check: &str, why: String) -> Self {
        SuiteEntry {
            check: check.into(),
            report: None,
            skipped: Some(why),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifySuite {
    pub problem: String,
    pub radius: f64,
    pub lipschitz_estimate: Option<f64>,
    pub entries: Vec<SuiteEntry>,
}

/// Fits and then verifies the structural assumptions of the configured problem
/// on the ball of radius `certify_radius`: PL, quadratic growth, strong
/// monotonicity and, for constrained runs, the constrained ISS inequality.
pub fn certify_suite(cfg: &ExperimentConfig) -> Result<CertifySuite> {
    cfg.validate()?;
    let p = cfg.problem.build()?;
    let d = p.dim();
    let r = cfg.certify_radius;
    let plan = SamplingPlan::ball(r);
    let region = ConvexSet::new_box(vec![-r; d], vec![r; d])?;
    let mut entries = Vec::new();

    match fit_pl(&p, &plan) {
        Ok(mu) if mu > 0.0 => entries.push(SuiteEntry::from("pl", check_pl(&p, mu, &plan.fresh()))),
        Ok(mu) => entries.push(SuiteEntry::skip(
            "pl",
            format!("no positive PL constant on the region (fitted {mu:e})"),
        )),
        Err(e) => entries.push(SuiteEntry::skip("pl", e.to_string())),
    }

    let mut modulus = p.constants().monotonicity;
    match fit_quadratic_growth(&p, &plan) {
        Ok((r1, r2)) if r1 > 0.0 => {
            modulus = modulus.or(Some(2.0 * r1));
            entries.push(SuiteEntry::from(
                "quadratic_growth",
                check_quadratic_growth(&p, r1, r2, &plan.fresh()),
            ));
        }
        Ok((r1, _)) => entries.push(SuiteEntry::skip(
            "quadratic_growth",
            format!("no positive lower growth constant on the region (fitted {r1:e})"),
        )),
        Err(e) => entries.push(SuiteEntry::skip("quadratic_growth", e.to_string())),
    }

    let m = modulus.unwrap_or(PROBE_MODULUS);
    entries.push(SuiteEntry::from(
        "strong_monotonicity",
        check_strong_monotonicity(&p, m, &region, 5000, plan.seed),
    ));

    if let Some(set) = &cfg.set {
        let g_bound = 2.0 * p.constants().lipschitz.unwrap_or(1.0) * set.diameter().max(1.0);
        entries.push(SuiteEntry::from(
            "iss_constrained",
            check_iss_constrained(&p, set, m, 0.0, g_bound, &SamplingPlan::ball(r)),
        ));
    }

    let lipschitz_estimate = p
        .require_subgradient()
        .ok()
        .map(|g| estimate_lipschitz(&*g, &region, 5000, plan.seed));
    Ok(CertifySuite {
        problem: p.name().to_string(),
        radius: r,
        lipschitz_estimate,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AptRow {
    pub lambda: f64,
    pub seed: u64,
    pub n: usize,
    pub t_start: Option<f64>,
    pub apt_deviation: Option<f64>,
    pub martingale_tail: Option<f64>,
    pub note: Option<String>,
}

/// Pseudo-trajectory deviation over `[t(n), t(n) + apt_horizon]` and the
/// martingale tail from `n`, for every cell and every start in `apt_starts`.
/// The comparison flow is `-grad f` (or its projected version) plus the
/// logged bias.
pub fn apt_suite(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<AptRow>> {
    cfg.validate()?;
    let p = cfg.problem.build()?;
    let sub = p.require_subgradient()?;
    let grid: Vec<(f64, u64)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| cfg.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SriError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let rows: Vec<Result<Vec<AptRow>>> = pool.install(|| {
        grid.par_iter()
            .map(|&(lambda, seed)| {
                let tr = match cfg.algorithm {
                    Algorithm::ZoSgd => zo_sgd_trace(cfg, lambda, seed)?,
                    Algorithm::ProjectedSubgrad => projected_subgrad_trace(cfg, lambda, seed)?,
                };
                let eps = if tr.bias_logged() {
                    tr.steps()
                        .iter()
                        .map(|s| s.bias.as_ref().map_or(0.0, Point::norm))
                        .fold(0.0, f64::max)
                } else {
                    0.0
                };
                let spec = match (&cfg.algorithm, &cfg.set) {
                    (Algorithm::ProjectedSubgrad, Some(set)) => {
                        let g_bound = tr
                            .steps()
                            .iter()
                            .map(|s| 2.0 * s.estimate.norm())
                            .fold(1.0, f64::max);
                        InclusionSpec::constrained(Arc::clone(&sub), set.clone(), g_bound)
                    }
                    _ => {
                        let g = Arc::clone(&sub);
                        InclusionSpec::field(move |x: &Point| g(x).scale(-1.0))
                    }
                }
                .with_bias(eps, BiasSelection::Zero);
                Ok(cfg
                    .apt_starts
                    .iter()
                    .map(|&n| {
                        if n >= tr.len() {
                            return AptRow {
                                lambda,
                                seed,
                                n,
                                t_start: None,
                                apt_deviation: None,
                                martingale_tail: None,
                                note: Some(format!(
                                    "start {n} is beyond the {} steps run",
                                    tr.len()
                                )),
                            };
                        }
                        let t_start = tr.clock(n);
                        let (apt_deviation, note) =
                            match apt_deviation(&tr, &spec, t_start, cfg.apt_horizon) {
                                Ok(v) => (Some(v), None),
                                Err(e) => (None, Some(e.to_string())),
                            };
                        AptRow {
                            lambda,
                            seed,
                            n,
                            t_start: Some(t_start),
                            apt_deviation,
                            martingale_tail: martingale_tail(&tr, n).ok(),
                            note,
                        }
                    })
                    .collect())
            })
            .collect()
    });
    Ok(rows
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect())
}

impl CertifySuite {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `certify.json` in `dir`.
pub fn write_certify(suite: &CertifySuite, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| SriError::io(dir, e))?;
    let path = dir.join("certify.json");
    write_file(&path, suite.to_json()?.as_bytes())?;
    Ok(path)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `apt.csv` in `dir`.
pub fn write_apt(rows: &[AptRow], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| SriError::io(dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "lambda",
        "seed",
        "n",
        "t_start",
        "apt_deviation",
        "martingale_tail",
        "note",
    ])?;
    for r in rows {
        w.write_record([
            r.lambda.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            opt(r.t_start),
            opt(r.apt_deviation),
            opt(r.martingale_tail),
            r.note.clone().unwrap_or_default(),
        ])?;
    }
    let path = dir.join("apt.csv");
    write_file(&path, &csv_bytes(w)?)?;
    Ok(path)
}
