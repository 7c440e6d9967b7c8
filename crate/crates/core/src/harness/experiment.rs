use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SriError};
use crate::oracles::{measure_bias, measure_second_moment};
use crate::oracles::{BiasModel, Problem, SweepPoint};
use crate::point::Point;
use crate::random::RandomSource;

use super::config::ExperimentConfig;
use super::drivers::run_cell;
use super::monitor::RunSummary;
use super::svg::{gap_chart, Series};

/// Outcome of one `(lambda, seed)` cell. Failed cells keep their error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub lambda: f64,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub runs: usize,
    pub failures: usize,
    pub median_gap: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    /// Median entry index for `delta = 0.05`; runs that never settle count as +inf.
    pub n_delta_05: Option<f64>,
}

/// Recomputed optimum against an expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub computed: f64,
    pub minimizer: Point,
    pub expected: f64,
    pub difference: f64,
    pub warning: bool,
}

pub const REFERENCE_TOL: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub iterations: usize,
    pub reference: Option<ReferenceCheck>,
    pub cells: Vec<CellOutcome>,
    pub summary: Vec<LambdaSummary>,
}

impl ExperimentReport {
    pub fn any_divergence(&self) -> bool {
        self.cells.iter().any(|c| c.diverged)
    }

    pub fn lambda(&self, lambda: f64) -> Option<&LambdaSummary> {
        self.summary.iter().find(|s| s.lambda == lambda)
    }

    /// Final gaps of the successful runs at `lambda`, ordered by seed.
    pub fn final_gaps(&self, lambda: f64) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.lambda == lambda)
            .filter_map(|c| c.summary.as_ref().and_then(|s| s.final_gap))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Type-7 sample quantile (linear interpolation between order statistics).
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SriError::Config(format!("cannot start {jobs} workers: {e}")))
}

fn sorted_lambdas(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut l = cfg.lambdas.clone();
    l.sort_by(f64::total_cmp);
    l.dedup();
    l
}

/// Runs the `(lambda x seed)` grid on `jobs` workers. Cells are independent;
/// results come back ordered by `(lambda, seed)`.
pub fn execute(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let lambdas = sorted_lambdas(cfg);
    let grid: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let cells: Vec<CellOutcome> = pool(jobs)?.install(|| {
        grid.par_iter()
            .map(|&(lambda, seed)| match run_cell(cfg, lambda, seed) {
                Ok((_, summary)) => CellOutcome {
                    lambda,
                    seed,
                    summary: Some(summary),
                    error: None,
                    diverged: false,
                },
                Err(e) => CellOutcome {
                    lambda,
                    seed,
                    summary: None,
                    diverged: matches!(e, SriError::Divergence { .. }),
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    let summary = lambdas.iter().map(|&l| aggregate(l, &cells)).collect();
    let reference = match cfg.reference_optimum {
        Some(expected) => Some(reference_check(&cfg.problem.build()?, expected)?),
        None => None,
    };
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        iterations: cfg.iterations,
        reference,
        cells,
        summary,
    })
}

fn aggregate(lambda: f64, cells: &[CellOutcome]) -> LambdaSummary {
    let mine: Vec<&CellOutcome> = cells.iter().filter(|c| c.lambda == lambda).collect();
    let gaps: Vec<f64> = mine
        .iter()
        .filter_map(|c| c.summary.as_ref().and_then(|s| s.final_gap))
        .collect();
    let entries: Vec<f64> = mine
        .iter()
        .filter_map(|c| c.summary.as_ref())
        .filter_map(|s| s.entry_index(0.05))
        .map(|e| e.map_or(f64::INFINITY, |n| n as f64))
        .collect();
    LambdaSummary {
        lambda,
        runs: mine.len(),
        failures: mine.iter().filter(|c| c.summary.is_none()).count(),
        median_gap: median(&gaps),
        q25: quantile(&gaps, 0.25),
        q75: quantile(&gaps, 0.75),
        n_delta_05: median(&entries).filter(|v| v.is_finite()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| SriError::io(path, e))
}

/// File name fragment for a lambda value, e.g. `0.0005` -> `0p0005`.
pub fn lambda_tag(lambda: f64) -> String {
    lambda.to_string().replace('.', "p").replace('-', "m")
}

/// Writes the per-run CSV, the per-lambda summary CSV, one SVG per lambda and
/// the JSON report into `dir`. Stops at the first I/O failure; files written
/// before it stay on disk.
pub fn write_outputs(
    report: &ExperimentReport,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| SriError::io(dir, e))?;
    let mut written = Vec::new();

    let runs_path = dir.join(&cfg.output.runs_csv);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "seed", "n", "gap", "sup_norm"])?;
    for c in &report.cells {
        if let Some(s) = &c.summary {
            for g in &s.gap_trace {
                w.write_record([
                    c.lambda.to_string(),
                    c.seed.to_string(),
                    g.n.to_string(),
                    fmt_opt(g.gap),
                    g.sup_norm.to_string(),
                ])?;
            }
        }
    }
    write_file(&runs_path, &csv_bytes(w)?)?;
    written.push(runs_path);

    let summary_path = dir.join(&cfg.output.summary_csv);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "median_gap", "q25", "q75", "n_delta_0.05"])?;
    for s in &report.summary {
        w.write_record([
            s.lambda.to_string(),
            fmt_opt(s.median_gap),
            fmt_opt(s.q25),
            fmt_opt(s.q75),
            s.n_delta_05
                .map_or_else(|| "none".to_string(), |v| v.to_string()),
        ])?;
    }
    write_file(&summary_path, &csv_bytes(w)?)?;
    written.push(summary_path);

    for s in &report.summary {
        let series: Vec<Series> = report
            .cells
            .iter()
            .filter(|c| c.lambda == s.lambda)
            .filter_map(|c| {
                c.summary.as_ref().map(|r| Series {
                    label: format!("seed {}", c.seed),
                    points: r
                        .gap_trace
                        .iter()
                        .filter_map(|g| g.gap.map(|v| (g.n as f64, v)))
                        .collect(),
                })
            })
            .collect();
        let title = format!("{}: gap vs iteration, lambda = {}", report.name, s.lambda);
        let path = dir.join(format!(
            "{}_lambda_{}.svg",
            cfg.output.svg_prefix,
            lambda_tag(s.lambda)
        ));
        write_file(&path, gap_chart(&title, &series).as_bytes())?;
        written.push(path);
    }

    let json_path = dir.join("report.json");
    write_file(&json_path, report.to_json()?.as_bytes())?;
    written.push(json_path);
    Ok(written)
}

pub(crate) fn csv_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| SriError::Consistency(format!("csv buffer: {e}")))
}

/// Report plus whatever was written; `io_error` is set if writing stopped early.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
    pub io_error: Option<SriError>,
}

pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    let report = execute(cfg, jobs)?;
    let (files, io_error) = match write_outputs(&report, cfg, &cfg.output.dir) {
        Ok(f) => (f, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    Ok(ExperimentOutcome {
        report,
        files,
        io_error,
    })
}

/// Fraction of `resamples` bootstrap draws (seeds resampled with replacement,
/// independently per group) in which `median(a) <= median(b)`.
pub fn bootstrap_order_fraction(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    if a.is_empty() || b.is_empty() || resamples == 0 {
        return 0.0;
    }
    let mut rng = RandomSource::with_stream(seed, 0xB007);
    let draw = |v: &[f64], rng: &mut RandomSource| {
        let s: Vec<f64> = (0..v.len()).map(|_| v[rng.index(v.len())]).collect();
        median(&s).expect("nonempty")
    };
    let hits = (0..resamples)
        .filter(|_| {
            let ma = draw(a, &mut rng);
            let mb = draw(b, &mut rng);
            ma <= mb
        })
        .count();
    hits as f64 / resamples as f64
}

/// Pool-adjacent-violators fit of a nondecreasing sequence.
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UShape {
    /// Index of the fitted minimum.
    pub valley: usize,
    /// Decreasing-then-increasing least-squares fit on log10 medians.
    pub fitted: Vec<f64>,
    pub rms_residual: f64,
    pub holds: bool,
}

/// Fits a valley-shaped curve to `log10(medians)` over the sorted lambda grid by
/// trying every split point (antitonic left part, isotonic right part). The
/// shape holds when the best valley is interior and both ends sit strictly above it.
pub fn u_shape(lambdas: &[f64], medians: &[f64]) -> Result<UShape> {
    if lambdas.len() != medians.len() || lambdas.len() < 3 {
        return Err(SriError::Domain(
            "u_shape needs at least three (lambda, median) pairs".into(),
        ));
    }
    if medians.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(SriError::Domain(
            "medians must be positive and finite".into(),
        ));
    }
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[i].total_cmp(&lambdas[j]));
    let y: Vec<f64> = order.iter().map(|&i| medians[i].log10()).collect();
    let n = y.len();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for k in 0..n {
        let left: Vec<f64> = y[..=k].iter().map(|v| -v).collect();
        let mut fit: Vec<f64> = isotonic(&left).into_iter().map(|v| -v).collect();
        let right = isotonic(&y[k + 1..]);
        fit.extend(right);
        let sse: f64 = fit.iter().zip(&y).map(|(f, v)| (f - v).powi(2)).sum();
        if best.as_ref().is_none_or(|b| sse < b.0 - 1e-15) {
            best = Some((sse, k, fit));
        }
    }
    let (sse, _, fitted) = best.expect("n >= 3");
    let low = fitted.iter().cloned().fold(f64::INFINITY, f64::min);
    let valley = fitted
        .iter()
        .position(|&v| v == low)
        .expect("minimum exists");
    let holds = fitted[0] > low && fitted[n - 1] > low;
    Ok(UShape {
        valley,
        fitted,
        rms_residual: (sse / n as f64).sqrt(),
        holds,
    })
}

/// High-precision local minimization from a grid of starts (gradient descent
/// with Armijo backtracking), compared against `expected`.
pub fn reference_check(problem: &Problem, expected: f64) -> Result<ReferenceCheck> {
    let grad = problem.require_gradient()?;
    let d = problem.dim();
    let mut starts = vec![Point::zeros(d)];
    if d <= 3 {
        let ticks = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let mut idx = vec![0usize; d];
        loop {
            starts.push(Point::from_vec(idx.iter().map(|&i| ticks[i]).collect()));
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < ticks.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
    } else {
        for i in 0..d {
            starts.push(Point::basis(d, i));
            starts.push(Point::basis(d, i).scale(-1.0));
        }
    }
    let mut best: Option<(f64, Point)> = None;
    for x0 in starts {
        let mut x = x0;
        let mut fx = problem.value(&x);
        for _ in 0..20_000 {
            let g = grad(&x);
            let gg = g.norm_sq();
            if gg < 1e-28 {
                break;
            }
            let mut t = 1.0;
            loop {
                let y = x.axpy(-t, &g);
                let fy = problem.value(&y);
                if fy <= fx - 1e-4 * t * gg || t < 1e-20 {
                    x = y;
                    fx = fy;
                    break;
                }
                t *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|b| fx < b.0) {
            best = Some((fx, x));
        }
    }
    let (computed, minimizer) = best.expect("at least one start");
    let difference = (computed - expected).abs();
    Ok(ReferenceCheck {
        computed,
        minimizer,
        expected,
        difference,
        warning: difference > REFERENCE_TOL,
    })
}

/// One lambda of a bias/variance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub bias_norm: f64,
    pub bias_standard_error: f64,
    pub second_moment: f64,
    pub second_moment_standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSweepReport {
    pub point: Point,
    pub samples: usize,
    pub rows: Vec<SweepRow>,
    pub model: Option<BiasModel>,
    pub lambda_star: Option<f64>,
    pub min_epsilon: Option<f64>,
    pub note: Option<String>,
}

/// Monte-Carlo bias norm and second moment of the configured estimator at
/// `point` for every lambda, followed by a `BiasModel` envelope fit.
pub fn bias_sweep(
    cfg: &ExperimentConfig,
    lambdas: &[f64],
    point: &Point,
    samples: usize,
    seed: u64,
    jobs: usize,
) -> Result<BiasSweepReport> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let mut lambdas = lambdas.to_vec();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let rows: Vec<Result<SweepRow>> = pool(jobs)?.install(|| {
        lambdas
            .par_iter()
            .map(|&lambda| {
                let zo = cfg.zo_config(lambda)?;
                let mut rng = RandomSource::for_cell(seed, lambda, 1);
                let b = measure_bias(&problem, &zo, point, samples, &mut rng)?;
                let m = measure_second_moment(&problem, &zo, point, samples, &mut rng)?;
                Ok(SweepRow {
                    lambda,
                    bias_norm: b.norm,
                    bias_standard_error: b.standard_error,
                    second_moment: m.value,
                    second_moment_standard_error: m.standard_error,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let pts: Vec<SweepPoint> = rows
        .iter()
        .map(|r| SweepPoint {
            lambda: r.lambda,
            bias_norm: r.bias_norm,
            second_moment: r.second_moment,
        })
        .collect();
    let (model, note) = match BiasModel::fit(&pts) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(BiasSweepReport {
        point: point.clone(),
        samples,
        lambda_star: model.and_then(|m| m.lambda_star()),
        min_epsilon: model.map(|m| m.min_epsilon()),
        rows,
        model,
        note,
    })
}

impl BiasSweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `bias_sweep.csv` and `bias_sweep.json` in `dir`.
pub fn write_sweep(report: &BiasSweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| SriError::io(dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "lambda",
        "bias_norm",
        "bias_standard_error",
        "second_moment",
        "second_moment_standard_error",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.lambda.to_string(),
            r.bias_norm.to_string(),
            r.bias_standard_error.to_string(),
            r.second_moment.to_string(),
            r.second_moment_standard_error.to_string(),
        ])?;
    }
    let csv_path = dir.join("bias_sweep.csv");
    write_file(&csv_path, &csv_bytes(w)?)?;
    let json_path = dir.join("bias_sweep.json");
    write_file(&json_path, report.to_json()?.as_bytes())?;
    Ok(vec![csv_path, json_path])
}

/// Pass/fail line of a reproduction check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn band_check(report: &ExperimentReport, lambda: f64, lo: f64, hi: f64) -> Check {
    let m = report.lambda(lambda).and_then(|s| s.median_gap);
    Check {
        name: format!("median gap at lambda = {lambda} in [{lo}, {hi}]"),
        passed: m.is_some_and(|v| v >= lo && v <= hi),
        detail: format!("median = {}", fmt_opt(m)),
    }
}

/// Acceptance bands for the two benchmark presets.
pub fn reproduction_checks(preset: &str, report: &ExperimentReport) -> Result<Vec<Check>> {
    match preset {
        "fig1" => {
            let mut out: Vec<Check> = [0.05, 0.1, 1.0]
                .iter()
                .map(|&l| band_check(report, l, 0.0, 0.1))
                .collect();
            out.push(band_check(report, 0.0005, 1.0, f64::INFINITY));
            let frac =
                bootstrap_order_fraction(&report.final_gaps(0.1), &report.final_gaps(1.0), 10, 0);
            out.push(Check {
                name: "median(0.1) <= median(1) in >= 7 of 10 bootstrap resamples".into(),
                passed: frac >= 0.7,
                detail: format!("fraction = {frac}"),
            });
            Ok(out)
        }
        "fig2" => Ok(vec![
            band_check(report, 0.05, 0.0, 0.05),
            band_check(report, 0.1, 0.0, 0.05),
            band_check(report, 1.0, 0.05, 1.0),
        ]),
        other => Err(SriError::Config(format!(
            "no reproduction checks for `{other}`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::problem::{f1, f2};

    fn small(n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::fig1();
        cfg.iterations = n;
        cfg.seeds = vec![2, 0, 1];
        cfg.lambdas = vec![1.0, 0.05];
        cfg
    }

    #[test]
    fn quantiles_type7() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&v, 0.75), Some(3.25));
        assert_eq!(quantile(&[7.0], 0.3), Some(7.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn grid_is_ordered_and_complete() {
        let r = execute(&small(300), 3).unwrap();
        let keys: Vec<(f64, u64)> = r.cells.iter().map(|c| (c.lambda, c.seed)).collect();
        assert_eq!(
            keys,
            vec![
                (0.05, 0),
                (0.05, 1),
                (0.05, 2),
                (1.0, 0),
                (1.0, 1),
                (1.0, 2)
            ]
        );
        assert!(r.cells.iter().all(|c| c.summary.is_some()));
        let s = r.lambda(0.05).unwrap();
        assert_eq!(s.runs, 3);
        let gaps = r.final_gaps(0.05);
        assert_eq!(s.median_gap, median(&gaps));
        assert!(!r.reference.as_ref().unwrap().warning);
    }

    #[test]
    fn outputs_are_deterministic() {
        let cfg = small(500);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = execute(&cfg, 1).unwrap();
        let rb = execute(&cfg, 4).unwrap();
        write_outputs(&ra, &cfg, a.path()).unwrap();
        let files = write_outputs(&rb, &cfg, b.path()).unwrap();
        assert_eq!(files.len(), 2 + 2 + 1);
        for f in &files {
            let name = f.file_name().unwrap();
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(f).unwrap(),
                "{name:?}"
            );
        }
        let runs = fs::read_to_string(a.path().join("runs.csv")).unwrap();
        assert!(runs.starts_with("lambda,seed,n,gap,sup_norm\n"));
        let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines[0], "lambda,median_gap,q25,q75,n_delta_0.05");
        assert_eq!(lines.len(), 3);
        assert!(a.path().join("gap_lambda_0p05.svg").exists());
        // one row per (lambda, seed, decimated n)
        let rows = runs.lines().count() - 1;
        assert_eq!(rows, 6 * 501);
    }

    #[test]
    fn io_failure_names_the_path() {
        let cfg = small(50);
        let r = execute(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        match write_outputs(&r, &cfg, &blocker.join("sub")) {
            Err(SriError::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("expected an I/O error, got {other:?}"),
        }
    }

    #[test]
    fn empty_seeds_rejected() {
        let mut cfg = small(10);
        cfg.seeds.clear();
        assert!(matches!(execute(&cfg, 1), Err(SriError::Config(_))));
    }

    #[test]
    fn failed_cells_are_kept() {
        let mut cfg = small(2000);
        cfg.problem = super::super::config::ProblemSpec::SquaredNorm { dim: 2 };
        cfg.oracle = super::super::config::OracleMode::ExactGradient;
        cfg.schedule.scale = 1.5;
        cfg.schedule.exponent = 0.0;
        cfg.reference_optimum = None;
        let r = execute(&cfg, 2).unwrap();
        assert!(r.any_divergence());
        assert_eq!(r.cells.len(), 6);
        assert!(r
            .cells
            .iter()
            .all(|c| c.error.as_ref().unwrap().contains("divergence")));
        assert_eq!(r.summary[0].failures, 3);
        assert_eq!(r.summary[0].median_gap, None);
    }

    #[test]
    fn bootstrap_fraction_extremes() {
        let lo = [0.1, 0.2, 0.3];
        let hi = [1.0, 2.0, 3.0];
        assert_eq!(bootstrap_order_fraction(&lo, &hi, 50, 1), 1.0);
        assert_eq!(bootstrap_order_fraction(&hi, &lo, 50, 1), 0.0);
    }

    #[test]
    fn pava_examples() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn u_shape_detection() {
        let l = [0.001, 0.01, 0.05, 0.1, 0.5, 1.0];
        let u = u_shape(&l, &[50.0, 0.5, 0.01, 0.003, 0.01, 0.03]).unwrap();
        assert!(u.holds);
        assert_eq!(u.valley, 3);
        assert!(u.rms_residual < 1e-12);
        let mono = u_shape(&l, &[50.0, 0.5, 0.01, 0.003, 0.002, 0.001]).unwrap();
        assert!(!mono.holds);
        let noisy = u_shape(&l, &[50.0, 0.5, 0.01, 0.003, 0.002, 0.03]).unwrap();
        assert!(noisy.holds);
        assert!(u_shape(&l[..2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn reference_optima_agree() {
        let r1 = reference_check(&f1(), -0.231).unwrap();
        assert!((r1.computed - f1().optimum_value().unwrap()).abs() < 1e-12);
        assert!(!r1.warning);
        let r2 = reference_check(&f2(), -0.481).unwrap();
        assert!((r2.computed - f2().optimum_value().unwrap()).abs() < 1e-12);
        assert!((r2.minimizer[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(!r2.warning);
        assert!(reference_check(&f1(), -0.3).unwrap().warning);
    }

    #[test]
    fn sweep_fits_an_envelope() {
        let cfg = ExperimentConfig::fig1();
        let rep = bias_sweep(&cfg, &[0.05, 0.1, 0.5, 1.0], &cfg.x0, 20_000, 0, 2).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let m = rep.model.unwrap();
        for r in &rep.rows {
            assert!(m.epsilon(r.lambda) >= r.bias_norm * (1.0 - 1e-12));
        }
        // second moment scales like 1/lambda^2 when query noise dominates
        let ratio = rep.rows[0].second_moment / rep.rows[1].second_moment;
        assert!(ratio > 3.0 && ratio < 5.0, "{ratio}");
        let dir = tempfile::tempdir().unwrap();
        let files = write_sweep(&rep, dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 5);
        let back: BiasSweepReport =
            serde_json::from_str(&fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
