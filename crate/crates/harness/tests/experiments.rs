use std::path::Path;

use fracharm_harness::config::{ExperimentConfig, ExponentSpec};
use fracharm_harness::experiments::run;
use fracharm_harness::report::{trend_slope, Trial};
use fracharm_harness::HarnessError;
use proptest::prelude::*;

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))).unwrap()
}

fn small(mut cfg: ExperimentConfig, count: usize) -> ExperimentConfig {
    cfg.corpus.count = count;
    cfg.sweep.trials = count.min(2);
    cfg.tolerances.stability_trials = 0;
    cfg
}

#[test]
fn endpoint_is_homogeneous_in_the_bounded_slot() {
    let mut one = small(config("endpoint"), 4);
    one.params.bounded_values = Some(vec![1.0]);
    let mut two = one.clone();
    two.params.bounded_values = Some(vec![2.0]);
    let a = run("endpoint", &one, 1).unwrap();
    let b = run("endpoint", &two, 1).unwrap();
    for (x, y) in a.trials.iter().zip(&b.trials) {
        assert!((y.lhs / x.lhs - 2.0).abs() < 1e-12);
        assert!((y.rhs / x.rhs - 2.0).abs() < 1e-12);
        assert!((y.ratio / x.ratio - 1.0).abs() < 1e-12);
    }
}

#[test]
fn endpoint_rejects_gamma_beyond_remaining_slots() {
    let mut cfg = small(config("endpoint"), 2);
    cfg.gamma = 1.5;
    assert!(matches!(run("endpoint", &cfg, 0), Err(HarnessError::Hypothesis(_))));
}

#[test]
fn endpoint_random_bounded_slot_passes() {
    let r = run("endpoint", &config("endpoint"), 13).unwrap();
    assert!(r.all_pass(), "{:?}", r.failed_checks());
}

#[test]
fn extrapolation_constant_case_has_small_constants() {
    let mut cfg = small(config("extrapolation"), 3);
    cfg.exponents = vec![ExponentSpec::Constant(2.0), ExponentSpec::Constant(2.0)];
    let r = run("extrapolation", &cfg, 2).unwrap();
    assert!(r.all_pass(), "{:?}", r.failed_checks());
    for key in ["duality_constant", "holder_constant"] {
        let v = r.diagnostics[key].as_f64().unwrap();
        assert!(v <= 4.0, "{key} = {v}");
    }
    // constant exponents: the duality step is exact
    assert!((r.diagnostics["duality_constant"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn extrapolation_variable_case_passes() {
    let r = run("extrapolation", &config("extrapolation"), 17).unwrap();
    assert!(r.all_pass(), "{:?}", r.failed_checks());
    assert!(r.diagnostics["rdf_excess"].as_f64().unwrap() <= 1.0);
}

#[test]
fn extrapolation_rejects_lower_exponent_above_infimum() {
    let mut cfg = small(config("extrapolation"), 1);
    cfg.params.p_lower = vec![1.9, 1.2];
    assert!(matches!(run("extrapolation", &cfg, 0), Err(HarnessError::Hypothesis(_))));
}

#[test]
fn fefferman_stein_single_function_is_scalar_bound() {
    let mut cfg = small(config("fefferman-stein"), 6);
    cfg.params.functions = 1;
    let r = run("fefferman-stein", &cfg, 7).unwrap();
    assert!(r.all_pass());
    // one indicator: (M f^r)^(1/r) = M f, so the ratio is ||M f|| / ||f||
    assert!(r.trials.iter().all(|t| t.ratio >= 1.0 - 1e-12));
}

#[test]
fn fefferman_stein_vector_and_fractional_forms_pass() {
    let r = run("fefferman-stein", &config("fefferman-stein"), 7).unwrap();
    assert!(r.all_pass(), "{:?}", r.failed_checks());
    let mut cfg = config("fefferman-stein");
    cfg.exponents = vec![ExponentSpec::Constant(4.0 / 3.0)];
    cfg.gamma = 0.5;
    cfg.params.fractional = true;
    let r = run("fefferman-stein", &cfg, 7).unwrap();
    assert!(r.all_pass(), "{:?}", r.failed_checks());
    assert!((r.diagnostics["q"].as_f64().unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn theorem_rejects_inconsistent_q_i() {
    let mut cfg = small(config("theorem-main"), 1);
    cfg.q_i = Some(vec![1.0 / 0.8, 1.0 / 0.6]);
    assert!(matches!(run("theorem-main", &cfg, 0), Err(HarnessError::Hypothesis(_))));
}

#[test]
fn theorem_rejects_moment_order_below_threshold() {
    let mut cfg = small(config("theorem-main"), 1);
    cfg.corpus.order = Some(0);
    assert!(matches!(run("theorem-main", &cfg, 0), Err(HarnessError::Hypothesis(_))));
}

#[test]
fn var_theorem_truncations_are_monotone() {
    let r = run("var-theorem", &small(config("var-theorem"), 3), 5).unwrap();
    assert!(r.diagnostics["truncation_decrease"].as_f64().unwrap() <= 1e-7);
}

#[test]
fn runs_are_deterministic_in_process() {
    let cfg = small(config("theorem-main"), 3);
    let a = run("theorem-main", &cfg, 4).unwrap();
    let b = run("theorem-main", &cfg, 4).unwrap();
    assert_eq!(a.trials, b.trials);
    let c = run("theorem-main", &cfg, 5).unwrap();
    assert_ne!(a.trials, c.trials);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slope_of_planted_power_law(slope in -1.0f64..1.0, levels in prop::collection::vec(0.1f64..10.0, 1..6)) {
        let trials: Vec<Trial> = levels
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (-3..=3).map(move |k| Trial::new(i, k, c * 2f64.powf(slope * k as f64), 1.0)))
            .collect();
        prop_assert!((trend_slope(&trials) - slope).abs() < 1e-9);
    }

    #[test]
    fn slope_ignores_trial_levels(levels in prop::collection::vec(1e-3f64..1e3, 2..8)) {
        let trials: Vec<Trial> = levels
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (-2..=2).map(move |k| Trial::new(i, k, *c, 1.0)))
            .collect();
        prop_assert!(trend_slope(&trials).abs() < 1e-9);
    }
}
