//! Regret ledgers, variation tracking, bound formulas and lemma oracles.

use proptest::prelude::*;
use sea_oco::geometry::vector;
use sea_oco::metrics::{
    bound_value, dynamic_regret, fuzz_all_lemmas, implicit_omd_stated_bound, lemma_oracle, static_regret, LemmaInput,
    LEMMA_SLACK,
};
use sea_oco::{
    BoundInputs, Domain, EnvironmentKind, EnvironmentSpec, Lemma, LossDistribution, LossFn, ProblemParams,
    RegretLedger, RegretMode, SeaEnvironment, Theorem, VariationTracker,
};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn convex_bound_at_zero_variance_is_the_constant_term() {
    let params = ProblemParams::new(1.0, 2.0).with_smoothness(1.0);
    let v = bound_value(Theorem::OmdConvex, &params, &BoundInputs::default()).unwrap();
    // 5·√10·D²L + (5/2)·√5·DG, evaluated independently.
    assert!(close(v, 74.42589309086654, 1e-14), "{v}");
}

#[test]
fn convex_bound_grows_with_the_square_roots_of_the_variances() {
    let params = ProblemParams::new(1.0, 2.0).with_smoothness(1.0);
    let base = bound_value(Theorem::OmdConvex, &params, &BoundInputs::default()).unwrap();
    let inputs = BoundInputs { sigma_cum: 100.0, big_sigma_cum: 25.0, ..BoundInputs::default() };
    let v = bound_value(Theorem::OmdConvex, &params, &inputs).unwrap();
    let expected = base + 5.0 * 2f64.sqrt() * 2.0 * 10.0 + 5.0 * 2.0 * 5.0;
    assert!(close(v, expected, 1e-14));
}

#[test]
fn exp_concave_bound_matches_frozen_value() {
    let params = ProblemParams::new(1.0, 2.0).with_smoothness(1.0).with_exp_concavity(1.0);
    let inputs = BoundInputs { sigma_cum: 10.0, big_sigma_cum: 5.0, dim: 3, ..BoundInputs::default() };
    let v = bound_value(Theorem::OmdExpConcave, &params, &inputs).unwrap();
    assert!(close(v, 2868.7756750588696, 1e-13), "{v}");
}

#[test]
fn implicit_bound_reports_both_constants() {
    let params = ProblemParams::new(1.0, 2.0);
    let zero = BoundInputs::default();
    let safe = bound_value(Theorem::ImplicitOmd, &params, &zero).unwrap();
    let stated = implicit_omd_stated_bound(&params, &zero).unwrap();
    assert!(close(safe, 24.49489742783178, 1e-14));
    assert!(close(stated, 14.142135623730951, 1e-14));
    assert!(safe > stated);
}

#[test]
fn strongly_convex_bound_without_variance_is_finite() {
    let params = ProblemParams::new(2.0, 2.0).with_smoothness(1.0).with_strong_convexity(1.0);
    let v = bound_value(Theorem::OmdStronglyConvex, &params, &BoundInputs::default()).unwrap();
    let expected = 16.0 * 4.0 * (1.0 + 8.0 * 2f64.sqrt()).ln() + (16.0 * 4.0 + 16.0) + 1.0;
    assert!(close(v, expected, 1e-14), "{v} vs {expected}");
}

#[test]
fn bounds_require_their_constants() {
    let params = ProblemParams::new(1.0, 2.0);
    assert!(bound_value(Theorem::OmdConvex, &params, &BoundInputs::default()).is_err());
    assert!(
        bound_value(Theorem::SmoothEnsemble, &params.clone().with_smoothness(1.0), &BoundInputs::default()).is_err()
    );
}

#[test]
fn theorem_labels_round_trip() {
    for label in ["1", "2", "3", "ftrl-convex", "5", "6", "7", "8"] {
        let t: Theorem = label.parse().unwrap();
        assert_eq!(t.label(), label);
    }
    assert!("4".parse::<Theorem>().is_err());
}

proptest! {
    #[test]
    fn every_bound_is_monotone_in_the_variances(s in 0.0f64..1e4, b in 0.0f64..1e4, p in 0.0f64..50.0) {
        let params = ProblemParams::new(1.0, 2.0).with_smoothness(1.0).with_strong_convexity(0.5).with_exp_concavity(0.5);
        let low = BoundInputs { sigma_cum: s, big_sigma_cum: b, sigma_tilde_cum: s, path_length: p, experts: 5, dim: 2,
            sigma_max_sq: 1.0, big_sigma_max_sq: 1.0 };
        let high = BoundInputs { sigma_cum: s + 1.0, big_sigma_cum: b + 1.0, sigma_tilde_cum: s + 1.0, ..low };
        for label in ["1", "2", "3", "ftrl-convex", "5", "6", "7", "8"] {
            let t: Theorem = label.parse().unwrap();
            let lo = bound_value(t, &params, &low).unwrap();
            let hi = bound_value(t, &params, &high).unwrap();
            prop_assert!(lo.is_finite() && lo > 0.0);
            prop_assert!(hi >= lo, "{label}: {hi} < {lo}");
        }
    }
}

#[test]
fn ledger_accumulates_static_and_dynamic_regret() {
    let mut ledger = RegretLedger::new();
    assert!(ledger.is_empty());
    ledger.push([1.0, 0.9, 0.5, 0.4, 0.2, 0.1]);
    ledger.push([2.0, 1.9, 1.5, 1.4, 0.2, 0.3]);
    assert_eq!(ledger.len(), 2);
    assert!(close(static_regret(&ledger, RegretMode::Sampled), 1.0, 1e-15));
    assert!(close(static_regret(&ledger, RegretMode::Expected), 1.0, 1e-15));
    assert!(close(dynamic_regret(&ledger, RegretMode::Sampled), 2.6, 1e-15));
    assert!(close(dynamic_regret(&ledger, RegretMode::Expected), 2.4, 1e-15));
    assert_eq!(ledger.prefix_sum_gap(), 0.0);
}

#[test]
fn ledger_records_function_values() {
    let mut ledger = RegretLedger::new();
    let f = LossFn::linear(vector(&[1.0, 0.0]));
    let big_f = LossFn::linear(vector(&[0.5, 0.0]));
    ledger.record(&f, &big_f, &vector(&[0.4, 0.0]), &vector(&[-1.0, 0.0]), &vector(&[-1.0, 0.0])).unwrap();
    assert!(close(static_regret(&ledger, RegretMode::Sampled), 1.4, 1e-15));
    assert!(close(static_regret(&ledger, RegretMode::Expected), 0.7, 1e-15));
}

#[test]
fn vbar_matches_an_independent_pass() {
    let grads = [[1.0, 0.0], [0.5, 0.5], [0.5, 0.5], [-1.0, 2.0]];
    let mut tracker = VariationTracker::new();
    for g in grads {
        tracker.observe_gradient(&vector(&g));
    }
    let mut expected = 0.0;
    let mut prev = [0.0, 0.0];
    for g in grads {
        expected += (g[0] - prev[0]).powi(2) + (g[1] - prev[1]).powi(2);
        prev = g;
    }
    assert!(close(tracker.vbar, expected, 1e-15));
    assert_eq!(tracker.rounds, 4);
}

fn track(spec: &EnvironmentSpec, horizon: usize) -> VariationTracker {
    let mut env = SeaEnvironment::new(spec, horizon, 1, 0).unwrap();
    let mut tracker = VariationTracker::new();
    for t in 1..=horizon {
        let r = env.next_round(t).unwrap();
        tracker.observe_round(r.sigma_sq_exact.unwrap(), r.adv_var_exact.unwrap(), true, true);
        tracker.observe_sampled(&r.f, &spec.domain).unwrap();
    }
    tracker
}

#[test]
fn iid_environment_accumulates_no_adversarial_variation_beyond_round_one() {
    let spec = EnvironmentSpec {
        domain: Domain::ball(2, 1.0),
        process: EnvironmentKind::IidStochastic {
            distribution: LossDistribution::SphereShift {
                center: LossFn::shifted_quadratic(vector(&[0.3, 0.0]), 1.0),
                radius: 0.5,
            },
        },
    };
    let tracker = track(&spec, 100);
    // Only the first round contributes: sup over the unit ball of ‖x − c‖² = (1 + 0.3)².
    assert!(close(tracker.big_sigma_cum, 1.69, 1e-12), "{}", tracker.big_sigma_cum);
    assert!(close(tracker.sigma_cum, 25.0, 1e-12));
}

#[test]
fn adversarial_environment_has_variation_equal_to_the_sampled_gradient_variation() {
    let spec = EnvironmentSpec {
        domain: Domain::ball(2, 1.0),
        process: EnvironmentKind::Adversarial {
            schedule: vec![
                LossFn::shifted_quadratic(vector(&[0.5, 0.0]), 1.0),
                LossFn::squared_linear(vector(&[0.6, 0.8]), 0.2),
                LossFn::linear(vector(&[0.0, -0.4])),
            ],
        },
    };
    let tracker = track(&spec, 30);
    assert_eq!(tracker.sigma_cum, 0.0);
    let v = tracker.gradient_variation.unwrap();
    assert!(close(tracker.big_sigma_cum, v, 1e-12), "{} vs {v}", tracker.big_sigma_cum);
}

#[test]
fn lemma_examples_hold_by_hand() {
    // l = (1, 3), δ = 0: 1/1 + 3/2 = 2.5 ≤ 2·2 = 4.
    let (lhs, rhs) = lemma_oracle(Lemma::Sum, &LemmaInput::Sequence { l: vec![1.0, 3.0], delta: 0.0 }).unwrap();
    assert!(close(lhs, 2.5, 1e-15) && close(rhs, 4.0, 1e-15));
    // l = (1, 3), δ = 1: 1/1 + 3/√2 ≤ 4·√5 + 3.
    let (lhs, rhs) = lemma_oracle(Lemma::SelfTuning, &LemmaInput::Sequence { l: vec![1.0, 3.0], delta: 1.0 }).unwrap();
    assert!(close(lhs, 1.0 + 3.0 / 2f64.sqrt(), 1e-15) && close(rhs, 4.0 * 5f64.sqrt() + 3.0, 1e-15));
    // One vector u = (1, 0) with ε = 1: 1/2 ≤ 2·ln(1.5).
    let (lhs, rhs) =
        lemma_oracle(Lemma::LogDet, &LemmaInput::Vectors { u: vec![vector(&[1.0, 0.0])], epsilon: 1.0 }).unwrap();
    assert!(close(lhs, 0.5, 1e-15) && close(rhs, 2.0 * 1.5f64.ln(), 1e-15));
    let (lhs, rhs) = lemma_oracle(Lemma::LnPq, &LemmaInput::Scalars { a: 1.0, b: 1.0, c: 1.0, big_a: 1.0 }).unwrap();
    assert!(close(lhs, 2f64.ln() - 1.0, 1e-15) && close(rhs, 2f64.ln(), 1e-15));
    let steps = LemmaInput::Steps {
        domain: Domain::ball(2, 1.0),
        metric: None,
        center: vector(&[0.0, 0.0]),
        a: vector(&[0.5, 0.0]),
        a_prime: vector(&[-3.0, 0.0]),
    };
    let (lhs, rhs) = lemma_oracle(Lemma::Stability, &steps).unwrap();
    assert!(close(lhs, 1.5, 1e-12) && close(rhs, 3.5, 1e-15));
}

#[test]
fn self_tuning_lemma_rejects_small_offsets() {
    assert!(lemma_oracle(Lemma::SelfTuning, &LemmaInput::Sequence { l: vec![1.0], delta: 0.5 }).is_err());
    assert!(lemma_oracle(Lemma::Sum, &LemmaInput::Scalars { a: 1.0, b: 1.0, c: 1.0, big_a: 1.0 }).is_err());
}

#[test]
fn lemma_fuzzing_finds_no_violations() {
    for report in fuzz_all_lemmas(500, 17).unwrap() {
        assert!(report.passed(), "{:?}", report);
        assert!(report.worst_gap <= LEMMA_SLACK);
    }
}
