//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use sea_oco::harness::{run_experiment_with_workers, to_precise_json, AlgorithmName};
use sea_oco::metrics::{bound_value, fuzz_all_lemmas};
use sea_oco::{ExperimentConfig, Summary, Theorem};
use support::oracles;

/// Absolute slack on the regret increase from `T = 10³` to `T = 10⁴` for a repeated loss.
const CONSTANT_REGRET_SLACK: f64 = 1e-6;
/// Largest tolerated ratio `regret(16000)/regret(1000)`.
const LOG_GROWTH_RATIO: f64 = 4.0;
/// Inflation of the lower-biased `σ̃²` estimate in the non-smooth bound.
const SIGMA_TILDE_INFLATION: f64 = 2.0;
/// Largest tolerated ratio of mean ensemble to mean best pool member dynamic regret.
const ENSEMBLE_RATIO: f64 = 2.0;
/// Instances per lemma in the fuzzing criterion.
const LEMMA_INSTANCES: usize = 10_000;
/// Worker counts compared by the determinism criterion.
const WORKER_COUNTS: [usize; 2] = [1, 8];

const CORRUPTED_QUADRATIC: &str = r#"{
    "environment": {
        "domain": {"type": "ball", "dim": 4, "radius": 1.0},
        "process": {
            "kind": "corrupted_stochastic",
            "distribution": {"type": "sphere_shift",
                "center": {"family": "shifted_quadratic", "c": [0.5, 0.0, 0.0, 0.0], "lam": 0.4}, "radius": 0.5},
            "corruption": {"budget": 20.0, "active_rounds": 100, "direction": [0.0, 1.0, 0.0, 0.0], "alternate": true}
        }
    },
    "algorithm": {"name": "ALGORITHM", "params": {"G": 1.0, "D": 2.0, "L": 1.0}},
    "T": 5000, "trials": 50, "seed": 7, "record_cadence": 500
}"#;

const STRONGLY_CONVEX: &str = r#"{
    "environment": {
        "domain": {"type": "ball", "dim": 4, "radius": 1.0},
        "process": {"kind": "iid_stochastic", "distribution": {"type": "sphere_shift",
            "center": {"family": "shifted_quadratic", "c": [0.3, -0.2, 0.1, 0.0], "lam": 1.0}, "radius": 0.5}}
    },
    "algorithm": {"name": "omd_sc", "params": {"G": 2.0, "D": 2.0, "L": 1.0, "lambda": 1.0}},
    "T": HORIZON, "trials": 20, "seed": 11, "record_cadence": HORIZON
}"#;

const REPEATED_LOSS: &str = r#"{
    "environment": {
        "domain": {"type": "ball", "dim": 4, "radius": 1.0},
        "process": {"kind": "adversarial",
            "schedule": [{"family": "shifted_quadratic", "c": [0.3, -0.2, 0.1, 0.0], "lam": 1.0}]}
    },
    "algorithm": {"name": "omd_sc", "params": {"G": 2.0, "D": 2.0, "L": 1.0, "lambda": 1.0}},
    "T": HORIZON, "trials": 1, "seed": 1, "record_cadence": HORIZON
}"#;

const SQUARED_LINEAR: &str = r#"{
    "environment": {
        "domain": {"type": "box", "lo": [-0.5, -0.5, -0.5], "hi": [0.5, 0.5, 0.5]},
        "process": {"kind": "iid_stochastic", "distribution": {"type": "atoms", "atoms": [
            {"family": "squared_linear", "a": [0.8, 0.2, -0.3], "b": 0.2},
            {"family": "squared_linear", "a": [-0.1, 0.7, 0.4], "b": -0.1},
            {"family": "squared_linear", "a": [0.3, -0.5, 0.6], "b": 0.3},
            {"family": "squared_linear", "a": [0.5, 0.5, 0.5], "b": 0.0}]}}
    },
    "algorithm": {"name": "ons", "params": {"G": 1.0, "D": 1.7320508075688772, "L": 1.0, "alpha": 0.5}},
    "T": 2000, "trials": 50, "seed": 5, "record_cadence": 200
}"#;

const ABSOLUTE: &str = r#"{
    "environment": {
        "domain": {"type": "ball", "dim": 2, "radius": 1.0},
        "process": {"kind": "iid_stochastic", "distribution": {"type": "sphere_shift",
            "center": {"family": "absolute", "a": [0.6, 0.8], "b": 0.1}, "radius": 0.4}}
    },
    "algorithm": {"name": "implicit_omd", "params": {"G": 1.0, "D": 2.0}},
    "T": 5000, "trials": 20, "seed": 3, "record_cadence": 500
}"#;

const SLOW_SHIFT_SMOOTH: &str = r#"{
    "environment": {
        "domain": {"type": "ball", "dim": 2, "radius": 1.0},
        "process": {"kind": "slow_shift", "center": {"family": "shifted_quadratic", "c": [0.0, 0.0], "lam": 1.0},
            "noise_radius": 0.2, "drift_sq": 0.04, "segment_length": 250, "region_radius": 0.6}
    },
    "algorithm": {"name": "alg_smooth", "params": {"G": 2.0, "D": 2.0, "L": 1.0}},
    "T": 5000, "trials": 10, "seed": 21, "record_cadence": 500
}"#;

const SLOW_SHIFT_NONSMOOTH: &str = r#"{
    "environment": {
        "domain": {"type": "ball", "dim": 2, "radius": 1.0},
        "process": {"kind": "slow_shift", "center": {"family": "absolute", "a": [0.6, 0.8], "b": 0.0},
            "noise_radius": 0.1, "drift_sq": 0.01, "segment_length": 250, "region_radius": 0.5}
    },
    "algorithm": {"name": "alg_nonsmooth", "params": {"G": 1.0, "D": 2.0}},
    "T": 5000, "trials": 10, "seed": 22, "record_cadence": 500
}"#;

struct Verdict {
    criterion: usize,
    passed: bool,
    detail: String,
}

/// Every experiment of the suite, kept for the invariant and determinism criteria.
#[derive(Default)]
struct Runs {
    configs: Vec<ExperimentConfig>,
    summaries: Vec<Summary>,
    json: Vec<String>,
}

impl Runs {
    fn run(&mut self, config: ExperimentConfig) -> (Summary, Duration) {
        let start = Instant::now();
        let summary = run_experiment_with_workers(&config, WORKER_COUNTS[0])
            .unwrap_or_else(|e| panic!("acceptance run failed: {e}"));
        let elapsed = start.elapsed();
        self.json.push(to_precise_json(&summary).expect("serializable summary"));
        self.configs.push(config);
        self.summaries.push(summary.clone());
        (summary, elapsed)
    }
}

fn config(template: &str, replacements: &[(&str, String)]) -> ExperimentConfig {
    let mut text = template.to_string();
    for (from, to) in replacements {
        text = text.replace(from, to);
    }
    ExperimentConfig::from_json(&text).expect("valid acceptance config")
}

fn bound(summary: &Summary) -> f64 {
    summary.final_scalars.bound_value.expect("run has a bound")
}

/// Mean over trials of `theorem`'s bound at each trial's measured inputs,
/// after `adjust` is applied to the inputs.
fn mean_bound(summary: &Summary, theorem: Theorem, adjust: impl Fn(&mut sea_oco::BoundInputs)) -> f64 {
    let values: Vec<f64> = summary
        .trials
        .iter()
        .map(|t| {
            let mut inputs = t.bound_inputs;
            adjust(&mut inputs);
            bound_value(theorem, &summary.config.algorithm.params, &inputs).expect("bound inputs complete")
        })
        .collect();
    values.iter().sum::<f64>() / values.len() as f64
}

fn criterion_1(runs: &mut Runs) -> Verdict {
    let (omd, omd_time) = runs.run(config(CORRUPTED_QUADRATIC, &[("ALGORITHM", "omd_convex".into())]));
    let (ftrl, ftrl_time) = runs.run(config(CORRUPTED_QUADRATIC, &[("ALGORITHM", "ftrl_convex".into())]));
    let omd_regret = omd.final_scalars.regret_mean;
    let omd_bound = bound(&omd);
    let ftrl_regret = ftrl.final_scalars.regret_mean;
    let ftrl_own = bound(&ftrl);
    let ftrl_yardstick = mean_bound(&ftrl, Theorem::OmdConvex, |_| {});
    let passed = omd_regret <= omd_bound
        && ftrl_regret <= ftrl_yardstick
        && omd_time < Duration::from_secs(30)
        && ftrl_time < Duration::from_secs(30);
    Verdict {
        criterion: 1,
        passed,
        detail: format!(
            "omd_convex regret {omd_regret:.4} <= bound {omd_bound:.2} in {:.1}s; ftrl_convex regret {ftrl_regret:.4}, \
             margin {:.2} to the convex OMD bound, {:.2} to its own bound",
            omd_time.as_secs_f64(),
            ftrl_yardstick - ftrl_regret,
            ftrl_own - ftrl_regret,
        ),
    }
}

fn criterion_2(runs: &mut Runs) -> Verdict {
    let start = Instant::now();
    let mut regrets = Vec::new();
    let mut within = true;
    let mut parts = Vec::new();
    for horizon in [1000usize, 4000, 16000] {
        let (s, _) = runs.run(config(STRONGLY_CONVEX, &[("HORIZON", horizon.to_string())]));
        let r = s.final_scalars.regret_mean;
        within &= r <= bound(&s);
        parts.push(format!("T={horizon}: {r:.4} <= {:.1}", bound(&s)));
        regrets.push(r);
    }
    let ratio = regrets[2] / regrets[0];
    let elapsed = start.elapsed();
    Verdict {
        criterion: 2,
        passed: within && ratio <= LOG_GROWTH_RATIO && elapsed < Duration::from_secs(60),
        detail: format!(
            "{}; growth ratio {ratio:.3} <= {LOG_GROWTH_RATIO} in {:.1}s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_3(runs: &mut Runs) -> Verdict {
    let (short, _) = runs.run(config(REPEATED_LOSS, &[("HORIZON", "1000".into())]));
    let (long, _) = runs.run(config(REPEATED_LOSS, &[("HORIZON", "10000".into())]));
    let (a, b) = (short.final_scalars.regret_mean, long.final_scalars.regret_mean);
    Verdict {
        criterion: 3,
        passed: b <= a + CONSTANT_REGRET_SLACK,
        detail: format!(
            "regret(T=1e3) {a:.9}, regret(T=1e4) {b:.9}, increase {:.2e} <= {CONSTANT_REGRET_SLACK:e}",
            b - a
        ),
    }
}

fn criterion_4(runs: &mut Runs) -> Verdict {
    let (s, elapsed) = runs.run(config(SQUARED_LINEAR, &[]));
    let r = s.final_scalars.regret_mean;
    Verdict {
        criterion: 4,
        passed: r <= bound(&s) && elapsed < Duration::from_secs(60),
        detail: format!("ons regret {r:.4} <= bound {:.1} in {:.1}s", bound(&s), elapsed.as_secs_f64()),
    }
}

fn criterion_5(runs: &mut Runs) -> Verdict {
    let (s, _) = runs.run(config(ABSOLUTE, &[]));
    let r = s.final_scalars.regret_mean;
    let inflated = mean_bound(&s, Theorem::ImplicitOmd, |i| i.sigma_tilde_cum *= SIGMA_TILDE_INFLATION);
    Verdict {
        criterion: 5,
        passed: r <= inflated,
        detail: format!(
            "implicit_omd regret {r:.4} <= bound {inflated:.1} at {SIGMA_TILDE_INFLATION}x estimated sigma-tilde \
             (estimate {:.1})",
            s.final_scalars.sigma_tilde_cum_mean
        ),
    }
}

/// Runs every pool member of an ensemble run as a standalone fixed-step
/// learner and returns the per-trial dynamic regrets of the member with the
/// smallest mean.
fn best_member(runs: &mut Runs, ensemble: &Summary, member: AlgorithmName) -> (f64, Vec<f64>) {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &eta in ensemble.pool.as_ref().expect("ensemble pool") {
        let mut c = ensemble.config.clone();
        c.algorithm.name = member;
        c.algorithm.eta = Some(eta);
        let (s, _) = runs.run(c);
        let mean = s.final_scalars.dynamic_regret_expected_mean;
        if best.as_ref().map_or(true, |b| mean < b.0) {
            best = Some((mean, s.trials.iter().map(|t| t.dynamic_regret_expected).collect()));
        }
    }
    best.expect("non-empty pool")
}

fn ensemble_check(runs: &mut Runs, template: &str, member: AlgorithmName) -> (bool, String) {
    let (s, _) = runs.run(config(template, &[]));
    let r = s.final_scalars.dynamic_regret_expected_mean;
    let b = bound(&s);
    let (best_mean, best_trials) = best_member(runs, &s, member);
    let ratio = r / best_mean;
    let worst_trial = s.trials.iter().zip(&best_trials).map(|(t, b)| t.dynamic_regret_expected / b).fold(0.0, f64::max);
    let passed = r <= b && ratio <= ENSEMBLE_RATIO;
    let name = format!("{:?}", s.config.algorithm.name);
    (
        passed,
        format!(
            "{name} dynamic regret {r:.4} <= bound {b:.1} (P_T {:.3}, N {}), {ratio:.3}x best member {best_mean:.4} \
             (largest single-trial ratio {worst_trial:.3})",
            s.final_scalars.path_length_mean, s.experts
        ),
    )
}

fn criterion_6(runs: &mut Runs) -> Verdict {
    let (smooth_ok, smooth) = ensemble_check(runs, SLOW_SHIFT_SMOOTH, AlgorithmName::OmdFixed);
    let (nonsmooth_ok, nonsmooth) = ensemble_check(runs, SLOW_SHIFT_NONSMOOTH, AlgorithmName::ImplicitFixed);
    Verdict { criterion: 6, passed: smooth_ok && nonsmooth_ok, detail: format!("{smooth}; {nonsmooth}") }
}

fn criterion_7(runs: &Runs) -> Verdict {
    let total: usize = runs.summaries.iter().map(|s| s.invariants.total()).sum();
    let rounds: usize = runs.configs.iter().map(|c| c.horizon * c.trials).sum();
    Verdict {
        criterion: 7,
        passed: total == 0,
        detail: format!("{total} invariant violations over {} runs and {rounds} learner rounds", runs.summaries.len()),
    }
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let reports = fuzz_all_lemmas(LEMMA_INSTANCES, 0).expect("lemma fuzzing runs");
    let elapsed = start.elapsed();
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    Verdict {
        criterion: 8,
        passed: violations == 0 && reports.len() == 8 && elapsed < Duration::from_secs(10),
        detail: format!(
            "{} lemmas x {LEMMA_INSTANCES} instances, {violations} violations in {:.2}s",
            reports.len(),
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_9() -> Verdict {
    let results = oracles::all();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let failing: Vec<&str> = results.iter().filter(|r| r.1.is_nan() || r.1 > oracles::TOL).map(|r| r.0).collect();
    Verdict {
        criterion: 9,
        passed: failing.is_empty(),
        detail: format!(
            "{} learner traces, largest deviation {worst:.1e} (tolerance {:e}){}",
            results.len(),
            oracles::TOL,
            if failing.is_empty() { String::new() } else { format!(", failing: {}", failing.join(", ")) }
        ),
    }
}

fn criterion_10(runs: &Runs) -> Verdict {
    let mut mismatched = Vec::new();
    for (i, (config, reference)) in runs.configs.iter().zip(&runs.json).enumerate() {
        for &workers in &WORKER_COUNTS {
            let again = run_experiment_with_workers(config, workers).expect("rerun succeeds");
            if to_precise_json(&again).expect("serializable summary") != *reference {
                mismatched.push(format!("run {i} at {workers} workers"));
            }
        }
    }
    Verdict {
        criterion: 10,
        passed: mismatched.is_empty(),
        detail: format!(
            "{} runs re-executed at workers {WORKER_COUNTS:?}: {}",
            runs.configs.len(),
            if mismatched.is_empty() { "byte-identical".to_string() } else { mismatched.join(", ") }
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut runs = Runs::default();
    let mut verdicts = vec![
        criterion_1(&mut runs),
        criterion_2(&mut runs),
        criterion_3(&mut runs),
        criterion_4(&mut runs),
        criterion_5(&mut runs),
        criterion_6(&mut runs),
    ];
    verdicts.push(criterion_7(&runs));
    verdicts.push(criterion_8());
    verdicts.push(criterion_9());
    verdicts.push(criterion_10(&runs));
    let mut failed = 0;
    for v in &verdicts {
        let status = if v.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!v.passed);
        println!("criterion {:>2} {status}: {}", v.criterion, v.detail);
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        verdicts.len() - failed,
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
