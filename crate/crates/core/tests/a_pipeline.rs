//! Cross-module pipeline tests. The file name sorts before `acceptance`, so
//! these still run when an acceptance criterion fails.

use std::fs;
use std::sync::Arc;

use proptest::prelude::*;
use sri_core::dynamics::{finite_horizon_certificate, BiasSelection, InclusionSpec};
use sri_core::harness::{
    execute, monitor, projected_subgrad_trace, simulate_sri, sri_membership, write_outputs,
    zo_sgd_trace, Algorithm, ExperimentConfig, NoiseLaw, OracleMode, ProblemSpec,
};
use sri_core::oracles::problem::{f1, l1_norm};
use sri_core::oracles::{BiasDirection, BiasModel, VectorFn};
use sri_core::{pt, ConvexSet, Point, StepSchedule};

fn short_fig1(n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::fig1();
    cfg.iterations = n;
    cfg
}

#[test]
fn config_file_to_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_fig1(2000);
    cfg.seeds = vec![0, 1, 2];
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    let loaded = ExperimentConfig::from_path(&path).unwrap();
    assert_eq!(loaded, cfg);
    let report = execute(&loaded, 2).unwrap();
    let files = write_outputs(&report, &loaded, dir.path()).unwrap();
    assert_eq!(files.len(), 2 + 4 + 1);
    assert_eq!(report.summary.len(), 4);
    assert!(report
        .summary
        .iter()
        .all(|s| s.runs == 3 && s.failures == 0));
}

#[test]
fn benchmark_runs_stay_bounded() {
    let mut cfg = ExperimentConfig::fig1();
    cfg.seeds = (0..4).collect();
    let report = execute(&cfg, 4).unwrap();
    for c in &report.cells {
        let s = c.summary.as_ref().unwrap();
        assert!(
            s.bounded && s.sup_norm <= 1e3,
            "lambda {} seed {}: {}",
            c.lambda,
            c.seed,
            s.sup_norm
        );
    }
    // settled runs keep visiting the unit ball around the minimizer to the end
    for c in report.cells.iter().filter(|c| c.lambda == 0.1) {
        let s = c.summary.as_ref().unwrap();
        assert!(s.entry_index(0.05).unwrap().is_some());
        assert_eq!(s.visits[0].last_index, Some(cfg.iterations));
    }
}

#[test]
fn projected_l1_on_simplex_passes_the_eta_audit() {
    let mut cfg = short_fig1(5000);
    cfg.problem = ProblemSpec::L1Norm { dim: 3 };
    cfg.x0 = pt![0.5, 0.3, 0.2];
    cfg.algorithm = Algorithm::ProjectedSubgrad;
    cfg.set = Some(ConvexSet::new_simplex(3, 1.0).unwrap());
    cfg.oracle = OracleMode::BiasedSubgradient {
        model: BiasModel::new(0.001, 0.01, 0.01).unwrap(),
        direction: BiasDirection::Adversarial,
    };
    cfg.reference_optimum = None;
    let tr = projected_subgrad_trace(&cfg, 0.1, 0).unwrap();
    let set = cfg.set.as_ref().unwrap();
    for (n, s) in tr.steps().iter().enumerate() {
        let eta = s.normal.as_ref().unwrap();
        assert!(eta.norm() <= 2.0 * s.estimate.norm() + 1e-9);
        assert!(set.contains(tr.point(n + 1)));
        assert!(
            set.truncated_normal_membership(tr.point(n + 1), eta, f64::INFINITY)
                || eta.norm() < 1e-9
        );
    }
    let s = monitor(&tr, &l1_norm(3), 0.1, &[0.1], &[0.05], 100, 1e3);
    assert!(s.final_gap.unwrap() < 0.05, "{:?}", s.final_gap);
    assert!(s.eta_ratio.unwrap() <= 2.0 + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn summary_invariants(seed in 0u64..1000, li in 0usize..4) {
        let lambda = [0.0005, 0.05, 0.1, 1.0][li];
        let cfg = short_fig1(1500);
        let tr = zo_sgd_trace(&cfg, lambda, seed).unwrap();
        let s = monitor(&tr, &f1(), lambda, &[0.5, 1.0, 4.0], &[0.01, 0.1, 1.0], 200, 1e3);
        prop_assert!(s.final_gap.unwrap() >= 0.0);
        prop_assert!(s.sup_norm.is_finite() && s.sup_norm >= tr.last().norm());
        // bigger neighbourhoods are entered no later
        let idx: Vec<usize> = s.entry.iter().map(|e| e.index.unwrap_or(usize::MAX)).collect();
        prop_assert!(idx[0] >= idx[1] && idx[1] >= idx[2]);
        // bigger balls are visited at least as often
        prop_assert!(s.visits[0].count <= s.visits[1].count && s.visits[1].count <= s.visits[2].count);
        prop_assert!(s.gap_trace.windows(2).all(|w| w[0].n < w[1].n && w[0].sup_norm <= w[1].sup_norm));
    }

    #[test]
    fn reconstructed_noise_makes_membership_exact(seed in 0u64..1000, lambda in 0.01f64..1.0) {
        let cfg = short_fig1(800);
        let tr = zo_sgd_trace(&cfg, lambda, seed).unwrap();
        let eps = tr.steps().iter().map(|s| s.bias.as_ref().unwrap().norm()).fold(0.0, f64::max);
        let g = f1().require_gradient().unwrap();
        let h = |x: &Point| g(x).scale(-1.0);
        let tight = sri_membership(&tr, &h, eps * (1.0 + 1e-6) + 1e-9).unwrap();
        prop_assert_eq!(tight.violations.len(), 0);
        let none = sri_membership(&tr, &h, 0.0).unwrap();
        prop_assert!(none.worst_residual > 0.0);
        prop_assert!((none.worst_residual - eps).abs() <= 1e-6 * (1.0 + eps));
    }

    #[test]
    fn certificate_holds_on_random_contractions(seed in 0u64..1000, eps in 0.0f64..0.2, sigma in 0.1f64..2.0) {
        let h: VectorFn = Arc::new(|x: &Point| x.scale(-1.0));
        let sched = Arc::new(StepSchedule::power(0.05, 0.6).unwrap());
        let b = pt![eps, 0.0];
        let tr = simulate_sri(&h, sched, pt![1.0, -1.0], 20_000, &NoiseLaw::Gaussian { sigma }, Some(&b), seed).unwrap();
        let spec = InclusionSpec::contraction().with_bias(eps, BiasSelection::Constant(b));
        for n in [10, 1000] {
            let c = finite_horizon_certificate(&tr, &spec, n, 1.0).unwrap();
            prop_assert!(c.holds(), "n = {}: {} > {}", n, c.measured, c.bound);
        }
    }
}
