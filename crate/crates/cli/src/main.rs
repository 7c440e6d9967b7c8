use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sri_core::harness::{
    apt_suite, bias_sweep, certify_suite, reproduction_checks, run_experiment, write_apt,
    write_certify, write_sweep, ExperimentConfig, ExperimentReport,
};
use sri_core::SriError;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sri",
    version,
    about = "Biased stochastic recursive inclusion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// Seeds: `N` for 0..N, `a..b` for a half-open range, or `a,b,c`.
    #[arg(long, global = true, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Output directory (replaces the one in the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Iterations per run (replaces N in the config).
    #[arg(long, global = true)]
    iterations: Option<usize>,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

#[derive(Subcommand)]
enum Command {
    /// Run the (lambda x seed) grid of a JSON config and write CSV/SVG outputs.
    Run { config: PathBuf },
    /// Run a built-in preset and check it against its acceptance bands.
    Reproduce { preset: Preset },
    /// Fit and verify the structural assumptions of the configured problem.
    Certify { config: PathBuf },
    /// Monte-Carlo bias and second moment of the estimator over the config's lambdas.
    BiasSweep { config: PathBuf },
    /// Pseudo-trajectory deviation and martingale tails along the configured runs.
    Apt { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig1,
    Fig2,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
        }
    }
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |_| format!("cannot read seeds from `{s}`");
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(bad)?,
            b.trim().parse().map_err(bad)?,
        );
        (a..b).collect()
    } else if s.contains(',') {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(bad))
            .collect::<Result<_, _>>()?
    } else {
        (0..s.parse::<u64>().map_err(bad)?).collect()
    };
    if seeds.is_empty() {
        return Err(format!("`{s}` gives no seeds"));
    }
    Ok(Seeds(seeds))
}

fn code_for(e: &SriError) -> u8 {
    match e {
        SriError::Config(_) => EXIT_CONFIG,
        SriError::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_FAILURE,
    }
}

fn fail(e: SriError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code_for(&e))
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig, SriError> {
    let mut cfg = ExperimentConfig::from_path(path).map_err(|e| match e {
        SriError::Io { .. } => SriError::Config(e.to_string()),
        other => other,
    })?;
    apply(&mut cfg, o)?;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<(), SriError> {
    if let Some(Seeds(s)) = &o.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(n) = o.iterations {
        cfg.iterations = n;
    }
    if let Some(d) = &o.out_dir {
        cfg.output.dir = d.clone();
    }
    cfg.validate()
}

fn jobs(o: &Overrides) -> usize {
    o.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:>10} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "lambda", "runs", "failed", "median_gap", "q25", "q75", "n_delta_0.05"
    );
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    for s in &report.summary {
        println!(
            "{:>10} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
            s.lambda,
            s.runs,
            s.failures,
            f(s.median_gap),
            f(s.q25),
            f(s.q75),
            s.n_delta_05
                .map_or_else(|| "none".to_string(), |v| v.to_string())
        );
    }
    if let Some(r) = &report.reference {
        let flag = if r.warning {
            " WARNING: differs by more than 5e-3"
        } else {
            ""
        };
        println!(
            "recomputed optimum {:.6} vs expected {}{flag}",
            r.computed, r.expected
        );
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "lambda {} seed {}: {}",
            c.lambda,
            c.seed,
            c.error.as_deref().unwrap_or("")
        );
    }
}

/// Runs the grid and writes outputs. `Err` carries the exit code.
fn grid(cfg: &ExperimentConfig, o: &Overrides) -> Result<ExperimentReport, u8> {
    let outcome = run_experiment(cfg, jobs(o)).map_err(|e| {
        eprintln!("error: {e}");
        code_for(&e)
    })?;
    print_summary(&outcome.report);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if let Some(e) = outcome.io_error {
        eprintln!("error: {e}");
        return Err(EXIT_FAILURE);
    }
    if outcome.report.any_divergence() {
        eprintln!("error: at least one run diverged");
        return Err(EXIT_DIVERGENCE);
    }
    Ok(outcome.report)
}

fn run(cli: Cli) -> ExitCode {
    let o = &cli.overrides;
    match &cli.command {
        Command::Run { config } => {
            let cfg = match load(config, o) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match grid(&cfg, o) {
                Ok(_) => ExitCode::SUCCESS,
                Err(code) => ExitCode::from(code),
            }
        }
        Command::Reproduce { preset } => {
            let mut cfg = ExperimentConfig::preset(preset.name()).expect("built-in preset");
            if let Err(e) = apply(&mut cfg, o) {
                return fail(e);
            }
            let report = match grid(&cfg, o) {
                Ok(r) => r,
                Err(code) => return ExitCode::from(code),
            };
            let checks = match reproduction_checks(preset.name(), &report) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ACCEPTANCE)
            }
        }
        Command::Certify { config } => {
            let result = load(config, o)
                .and_then(|cfg| certify_suite(&cfg).map(|s| (cfg, s)))
                .and_then(|(cfg, s)| Ok((write_certify(&s, &cfg.output.dir)?, s.to_json()?)));
            match result {
                Ok((path, json)) => {
                    println!("{json}");
                    eprintln!("wrote {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::BiasSweep { config } => {
            let cfg = match load(config, o) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let report = match bias_sweep(
                &cfg,
                &cfg.lambdas,
                &cfg.x0,
                cfg.sweep_samples,
                cfg.seeds[0],
                jobs(o),
            ) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            println!(
                "{:>10} {:>14} {:>14} {:>14}",
                "lambda", "bias_norm", "std_error", "second_moment"
            );
            for r in &report.rows {
                println!(
                    "{:>10} {:>14.6e} {:>14.6e} {:>14.6e}",
                    r.lambda, r.bias_norm, r.bias_standard_error, r.second_moment
                );
            }
            match (&report.model, &report.note) {
                (Some(m), _) => println!(
                    "fit: b1 = {:.6e}, b2 = {:.6e}, b3 = {:.6e}, lambda* = {}, min epsilon = {:.6e}",
                    m.b1,
                    m.b2,
                    m.b3,
                    m.lambda_star().map_or_else(|| "none".to_string(), |l| format!("{l:.6}")),
                    m.min_epsilon()
                ),
                (None, Some(n)) => println!("no fit: {n}"),
                (None, None) => {}
            }
            match write_sweep(&report, &cfg.output.dir) {
                Ok(files) => {
                    for f in files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Apt { config } => {
            let cfg = match load(config, o) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let rows = match apt_suite(&cfg, jobs(o)) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            println!(
                "{:>10} {:>6} {:>8} {:>14} {:>14}",
                "lambda", "seed", "n", "apt_deviation", "tail"
            );
            let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
            for r in &rows {
                println!(
                    "{:>10} {:>6} {:>8} {:>14} {:>14}",
                    r.lambda,
                    r.seed,
                    r.n,
                    f(r.apt_deviation),
                    f(r.martingale_tail)
                );
            }
            match write_apt(&rows, &cfg.output.dir) {
                Ok(p) => {
                    println!("wrote {}", p.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse())
}
