//! Experiment runner: configuration, seeded parallel trials, per-round
//! invariant monitoring, deterministic aggregation, and CSV/JSON output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{AltOptimismEnsemble, NonsmoothEnsemble, PoolKind, SmoothEnsemble, StepSizePool};
use crate::environments::{EnvironmentSpec, RoundLaw, SeaEnvironment};
use crate::error::{Error, Result};
use crate::geometry::{Domain, ProblemParams, Vector};
use crate::metrics::{
    bound_value, dynamic_regret, implicit_omd_stated_bound, static_regret, BoundInputs, RegretLedger, RegretMode,
    Theorem, VariationTracker,
};
use crate::static_learners::{
    FtrlConvex, FtrlExpConcave, FtrlStronglyConvex, ImplicitOmd, OnlineLearner, OnlineNewtonOmd, OptimisticOmd,
    StepReport, StepRule,
};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "SEA_OCO_WORKERS";
/// Slack of the per-round stability inequality.
pub const STABILITY_SLACK: f64 = 1e-9;
/// Tolerance on the weights summing to one and being non-negative.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance of the feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-10;
/// Relative tolerance of step-size rules.
pub const STEP_RULE_TOL: f64 = 1e-12;
/// Largest tolerated share of failed trials.
pub const MAX_FAILURE_SHARE: f64 = 0.1;

/// Available learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    OmdConvex,
    OmdSc,
    OmdFixed,
    Ons,
    FtrlConvex,
    FtrlSc,
    FtrlExp,
    ImplicitOmd,
    ImplicitFixed,
    AlgSmooth,
    AlgNonsmooth,
    AlgAltOptimism,
}

impl AlgorithmName {
    /// The guarantee the learner is compared against, if any.
    pub fn theorem(self) -> Option<Theorem> {
        match self {
            AlgorithmName::OmdConvex => Some(Theorem::OmdConvex),
            AlgorithmName::OmdSc | AlgorithmName::FtrlSc => Some(Theorem::OmdStronglyConvex),
            AlgorithmName::Ons | AlgorithmName::FtrlExp => Some(Theorem::OmdExpConcave),
            AlgorithmName::FtrlConvex => Some(Theorem::FtrlConvex),
            AlgorithmName::ImplicitOmd => Some(Theorem::ImplicitOmd),
            AlgorithmName::AlgSmooth => Some(Theorem::SmoothEnsemble),
            AlgorithmName::AlgNonsmooth => Some(Theorem::NonsmoothEnsemble),
            AlgorithmName::AlgAltOptimism => Some(Theorem::AltOptimismEnsemble),
            AlgorithmName::OmdFixed | AlgorithmName::ImplicitFixed => None,
        }
    }

    fn pool_kind(self) -> Option<PoolKind> {
        match self {
            AlgorithmName::AlgSmooth => Some(PoolKind::Smooth),
            AlgorithmName::AlgNonsmooth => Some(PoolKind::Nonsmooth),
            AlgorithmName::AlgAltOptimism => Some(PoolKind::AltOptimism),
            _ => None,
        }
    }

    fn needs_prox(self) -> bool {
        matches!(self, AlgorithmName::ImplicitOmd | AlgorithmName::ImplicitFixed | AlgorithmName::AlgNonsmooth)
    }
}

/// Learner choice and its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgorithmName,
    pub params: ProblemParams,
    /// Step size of the fixed-step learners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Explicit step-size pool for the ensembles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<f64>>,
}

/// Monte Carlo settings for quantities without closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    /// Draws per `σ̃_t²` estimate.
    pub samples: usize,
    /// Random probe points per supremum estimate.
    pub probe_points: usize,
}

impl Default for EstimationSpec {
    fn default() -> Self {
        Self { samples: 64, probe_points: 64 }
    }
}

fn one() -> usize {
    1
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmSpec,
    /// Horizon `T`.
    #[serde(rename = "T")]
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Record a summary row every this many rounds.
    #[serde(default = "one")]
    pub record_cadence: usize,
    #[serde(default)]
    pub estimation: EstimationSpec,
}

impl ExperimentConfig {
    /// Parses a JSON configuration.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    /// Reads and parses a JSON configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the configuration against the environment's analytic constants.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.trials == 0 || self.record_cadence == 0 {
            return Err(Error::Config("T, trials and record_cadence must be at least 1".into()));
        }
        if self.estimation.samples == 0 {
            return Err(Error::Config("estimation.samples must be at least 1".into()));
        }
        let params = &self.algorithm.params;
        params.validate()?;
        let env = SeaEnvironment::new(&self.environment, self.horizon, self.seed, 0)?;
        let info = env.info()?;
        let domain = &self.environment.domain;
        let rel = 1e-9;
        if info.grad_bound > params.g * (1.0 + rel) {
            return Err(Error::Config(format!(
                "environment gradient bound {} exceeds the configured G = {}",
                info.grad_bound, params.g
            )));
        }
        if domain.diameter() > params.d * (1.0 + rel) {
            return Err(Error::Config(format!(
                "domain diameter {} exceeds the configured D = {}",
                domain.diameter(),
                params.d
            )));
        }
        if let (Some(l), Some(env_l)) = (params.l, info.smoothness) {
            if env_l > l * (1.0 + rel) {
                return Err(Error::Config(format!("environment smoothness {env_l} exceeds the configured L = {l}")));
            }
        }
        if let Some(lambda) = params.lambda {
            if info.lambda.map_or(true, |v| v < lambda * (1.0 - rel)) {
                return Err(Error::Config(format!(
                    "configured lambda = {lambda} is not a strong-convexity modulus of the environment"
                )));
            }
        }
        if let Some(alpha) = params.alpha {
            if info.alpha.map_or(true, |v| v < alpha * (1.0 - rel)) {
                return Err(Error::Config(format!(
                    "configured alpha = {alpha} is not an exp-concavity modulus of the environment"
                )));
            }
        }
        let name = self.algorithm.name;
        if name.needs_prox() && !info.gradient_affine {
            if let crate::environments::EnvironmentKind::LimitedResources { .. } = self.environment.process {
                return Err(Error::Config(
                    "implicit updates on limited-resources environments need smooth losses".into(),
                ));
            }
        }
        if matches!(name, AlgorithmName::OmdFixed | AlgorithmName::ImplicitFixed) && self.algorithm.eta.is_none() {
            return Err(Error::Config(format!("{name:?} requires eta")));
        }
        build_learner(self)?;
        if let Some(theorem) = name.theorem() {
            let inputs = BoundInputs { experts: 1, dim: domain.dim(), ..BoundInputs::default() };
            bound_value(theorem, params, &inputs)?;
        }
        Ok(())
    }

    fn needs_sigma_tilde(&self, gradient_affine: bool) -> bool {
        !gradient_affine || self.algorithm.name.theorem().is_some_and(Theorem::uses_sigma_tilde)
    }
}

/// Builds the configured learner.
pub fn build_learner(config: &ExperimentConfig) -> Result<Box<dyn OnlineLearner>> {
    let spec = &config.algorithm;
    let domain = config.environment.domain.clone();
    let params = &spec.params;
    let eta = || spec.eta.ok_or_else(|| Error::Config(format!("{:?} requires eta", spec.name)));
    let pool = |kind: PoolKind| -> Result<Option<StepSizePool>> {
        Ok(spec.pool.as_ref().map(|etas| StepSizePool { etas: etas.clone(), kind, clamped: false }))
    };
    Ok(match spec.name {
        AlgorithmName::OmdConvex => Box::new(OptimisticOmd::convex(domain, params)?),
        AlgorithmName::OmdSc => Box::new(OptimisticOmd::strongly_convex(domain, params)?),
        AlgorithmName::OmdFixed => Box::new(OptimisticOmd::fixed(domain, eta()?)?),
        AlgorithmName::Ons => Box::new(OnlineNewtonOmd::new(domain, params)?),
        AlgorithmName::FtrlConvex => Box::new(FtrlConvex::new(domain, params)?),
        AlgorithmName::FtrlSc => Box::new(FtrlStronglyConvex::new(domain, params)?),
        AlgorithmName::FtrlExp => Box::new(FtrlExpConcave::new(domain, params)?),
        AlgorithmName::ImplicitOmd => Box::new(ImplicitOmd::adaptive(domain, params)?),
        AlgorithmName::ImplicitFixed => Box::new(ImplicitOmd::fixed(domain, eta()?)?),
        AlgorithmName::AlgSmooth => Box::new(match pool(PoolKind::Smooth)? {
            Some(p) => SmoothEnsemble::with_pool(domain, params, p)?,
            None => SmoothEnsemble::new(domain, params, config.horizon)?,
        }),
        AlgorithmName::AlgNonsmooth => Box::new(match pool(PoolKind::Nonsmooth)? {
            Some(p) => NonsmoothEnsemble::with_pool(domain, p)?,
            None => NonsmoothEnsemble::new(domain, params, config.horizon)?,
        }),
        AlgorithmName::AlgAltOptimism => Box::new(match pool(PoolKind::AltOptimism)? {
            Some(p) => AltOptimismEnsemble::with_pool(domain, params, p)?,
            None => AltOptimismEnsemble::new(domain, params, config.horizon)?,
        }),
    })
}

/// Step sizes of the configured ensemble's base learners, if it is an ensemble.
pub fn pool_etas(config: &ExperimentConfig) -> Result<Option<Vec<f64>>> {
    if let Some(p) = &config.algorithm.pool {
        return Ok(Some(p.clone()));
    }
    Ok(match config.algorithm.name.pool_kind() {
        Some(kind) => Some(crate::ensemble::build_pool(&config.algorithm.params, config.horizon, kind)?.etas),
        None => None,
    })
}

fn pool_size(config: &ExperimentConfig) -> Result<usize> {
    Ok(pool_etas(config)?.map_or(1, |p| p.len()))
}

/// Counts of per-round invariant violations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub stability: usize,
    pub simplex: usize,
    pub feasibility: usize,
    pub step_rule: usize,
    /// Rounds whose gradient norm exceeded the configured `G`.
    pub gradient_bound: usize,
    /// Description of the first violation, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first: Option<String>,
}

impl InvariantCounts {
    /// Violations of the algorithmic invariants (excludes assumption checks).
    pub fn total(&self) -> usize {
        self.stability + self.simplex + self.feasibility + self.step_rule
    }

    fn add(&mut self, other: &InvariantCounts) {
        self.stability += other.stability;
        self.simplex += other.simplex;
        self.feasibility += other.feasibility;
        self.step_rule += other.step_rule;
        self.gradient_bound += other.gradient_bound;
        if self.first.is_none() {
            self.first = other.first.clone();
        }
    }
}

/// Per-round invariant checks of one trial.
#[derive(Debug, Clone, Default)]
pub struct InvariantMonitor {
    counts: InvariantCounts,
    last_eta: Option<f64>,
}

impl InvariantMonitor {
    /// Fresh monitor.
    pub fn new() -> Self {
        Self::default()
    }

    fn flag(&mut self, t: usize, what: &str) {
        if self.counts.first.is_none() {
            self.counts.first = Some(format!("round {t}: {what}"));
        }
    }

    /// Checks that `x` is feasible.
    pub fn check_feasible(&mut self, t: usize, domain: &Domain, x: &Vector) {
        if !domain.contains(x, FEASIBILITY_TOL) {
            self.counts.feasibility += 1;
            self.flag(t, "infeasible decision");
        }
    }

    /// Checks one learner report.
    pub fn check_report(&mut self, t: usize, domain: &Domain, grad_bound: f64, report: &StepReport) {
        if report.grad.norm() > grad_bound * (1.0 + 1e-9) {
            self.counts.gradient_bound += 1;
        }
        if let Some(step) = report.step {
            let ok = match step.rule {
                StepRule::NonIncreasing => self.last_eta.map_or(true, |prev| step.eta <= prev * (1.0 + STEP_RULE_TOL)),
                StepRule::Exactly(v) => (step.eta - v).abs() <= STEP_RULE_TOL * v.abs().max(1.0),
            };
            if !ok || !step.eta.is_finite() || step.eta < 0.0 {
                self.counts.step_rule += 1;
                self.flag(t, &format!("step size {} breaks its rule", step.eta));
            }
            self.last_eta = Some(step.eta);
        }
        let mut stabilities: Vec<_> = report.stability.iter().copied().collect();
        if let Some(meta) = &report.meta {
            stabilities.extend(meta.base_stability.iter().copied());
            let sum: f64 = meta.weights.iter().sum();
            if meta.weights.iter().any(|w| !(*w >= -SIMPLEX_TOL)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                self.counts.simplex += 1;
                self.flag(t, "meta weights leave the simplex");
            }
            for x in &meta.next_base_decisions {
                if !domain.contains(x, FEASIBILITY_TOL) {
                    self.counts.feasibility += 1;
                    self.flag(t, "infeasible base decision");
                }
            }
        }
        for s in stabilities {
            if !(s.lhs <= s.rhs + STABILITY_SLACK * s.rhs.max(1.0)) {
                self.counts.stability += 1;
                self.flag(t, &format!("stability {} > {}", s.lhs, s.rhs));
            }
        }
    }

    /// Counts so far.
    pub fn counts(&self) -> &InvariantCounts {
        &self.counts
    }
}

/// Quantities of one trial at a recorded round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub round: usize,
    pub regret: f64,
    pub vbar: f64,
    pub sigma_cum: f64,
    pub big_sigma_cum: f64,
    pub bound: Option<f64>,
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub rows: Vec<TrialRow>,
    /// Expected-mode static regret.
    pub regret_expected: f64,
    /// Sampled-mode static regret.
    pub regret_sampled: f64,
    /// Expected-mode dynamic regret.
    pub dynamic_regret_expected: f64,
    pub tracker: VariationTracker,
    pub bound: Option<f64>,
    pub bound_stated: Option<f64>,
    pub bound_inputs: BoundInputs,
    pub comparator_estimated: bool,
    pub invariants: InvariantCounts,
}

impl TrialOutcome {
    /// Regret the trial's guarantee concerns: dynamic for ensembles, static otherwise.
    pub fn regret(&self, theorem: Option<Theorem>) -> f64 {
        if theorem.is_some_and(Theorem::is_dynamic) {
            self.dynamic_regret_expected
        } else {
            self.regret_expected
        }
    }
}

/// Runs one trial of `config`.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialOutcome> {
    let mut env = SeaEnvironment::new(&config.environment, config.horizon, config.seed, trial as u64)?;
    let domain = config.environment.domain.clone();
    let info = env.info()?;
    let comparators = env.comparators()?;
    let mut learner = build_learner(config)?;
    let theorem = config.algorithm.name.theorem();
    let params = &config.algorithm.params;
    let experts = pool_size(config)?;
    let want_tilde = config.needs_sigma_tilde(info.gradient_affine);
    let mut ledger = RegretLedger::new();
    let mut tracker = VariationTracker::new();
    let mut monitor = InvariantMonitor::new();
    let mut rows = Vec::new();
    let mut cached_law: Option<(RoundLaw, f64)> = None;
    let mut previous_law: Option<RoundLaw> = None;
    let mut path_prefix = 0.0;
    let bound_at = |tracker: &VariationTracker, path: f64| -> Result<Option<(f64, BoundInputs)>> {
        let Some(theorem) = theorem else { return Ok(None) };
        let inputs = BoundInputs {
            sigma_cum: tracker.sigma_cum,
            big_sigma_cum: tracker.big_sigma_cum,
            sigma_tilde_cum: tracker.sigma_tilde_cum,
            sigma_max_sq: tracker.sigma_max_sq,
            big_sigma_max_sq: tracker.big_sigma_max_sq,
            path_length: path,
            experts,
            dim: domain.dim(),
        };
        Ok(Some((bound_value(theorem, params, &inputs)?, inputs)))
    };
    for t in 1..=config.horizon {
        let round = env.next_round(t)?;
        let x = learner.decision().clone();
        monitor.check_feasible(t, &domain, &x);
        if t >= 2 {
            path_prefix += (&comparators.dynamic[t - 1] - &comparators.dynamic[t - 2]).norm();
        }
        ledger.record(&round.f, &round.expected.loss, &x, &comparators.fixed, &comparators.dynamic[t - 1])?;
        let report = learner.observe(&round.f)?;
        tracker.observe_gradient(&report.grad);
        tracker.observe_sampled(&round.f, &domain)?;
        monitor.check_report(t, &domain, params.g, &report);

        let law = if want_tilde || round.adv_var_exact.is_none() { Some(env.law(t)?) } else { None };
        let tilde = if want_tilde {
            let law = law.as_ref().expect("law");
            let value = match &cached_law {
                Some((cached, v)) if cached == law => *v,
                _ => env.sigma_tilde_sq_estimate(t, config.estimation.samples, config.estimation.probe_points)?,
            };
            cached_law = Some((law.clone(), value));
            tracker.observe_sigma_tilde(value);
            Some(value)
        } else {
            None
        };
        let (sigma_sq, sigma_exact) = match round.sigma_sq_exact {
            Some(v) => (v, true),
            None => (tilde.expect("estimate requested for non-affine gradients"), false),
        };
        let (adv, adv_exact) = match round.adv_var_exact {
            Some(v) => (v, true),
            None => {
                let law = law.as_ref().expect("law");
                let same = previous_law.as_ref().is_some_and(|p| p.mean() == law.mean());
                let v = if same { 0.0 } else { env.adv_var_estimate(t, config.estimation.probe_points)? };
                (v, false)
            }
        };
        previous_law = law;
        tracker.observe_round(sigma_sq, adv, sigma_exact, adv_exact);

        if t % config.record_cadence == 0 {
            let regret = if theorem.is_some_and(Theorem::is_dynamic) {
                dynamic_regret(&ledger, RegretMode::Expected)
            } else {
                static_regret(&ledger, RegretMode::Expected)
            };
            rows.push(TrialRow {
                round: t,
                regret,
                vbar: tracker.vbar,
                sigma_cum: tracker.sigma_cum,
                big_sigma_cum: tracker.big_sigma_cum,
                bound: bound_at(&tracker, path_prefix)?.map(|b| b.0),
            });
        }
    }
    tracker.path_length = comparators.path_length;
    let final_bound = bound_at(&tracker, comparators.path_length)?;
    let bound_inputs = final_bound.map(|b| b.1).unwrap_or(BoundInputs {
        sigma_cum: tracker.sigma_cum,
        big_sigma_cum: tracker.big_sigma_cum,
        sigma_tilde_cum: tracker.sigma_tilde_cum,
        sigma_max_sq: tracker.sigma_max_sq,
        big_sigma_max_sq: tracker.big_sigma_max_sq,
        path_length: comparators.path_length,
        experts,
        dim: domain.dim(),
    });
    let bound_stated = match theorem {
        Some(Theorem::ImplicitOmd) => Some(implicit_omd_stated_bound(params, &bound_inputs)?),
        _ => None,
    };
    Ok(TrialOutcome {
        trial,
        rows,
        regret_expected: static_regret(&ledger, RegretMode::Expected),
        regret_sampled: static_regret(&ledger, RegretMode::Sampled),
        dynamic_regret_expected: dynamic_regret(&ledger, RegretMode::Expected),
        tracker,
        bound: final_bound.map(|b| b.0),
        bound_stated,
        bound_inputs,
        comparator_estimated: comparators.estimated,
        invariants: monitor.counts().clone(),
    })
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: usize,
    pub regret_mean: f64,
    pub regret_stderr: f64,
    pub vbar_mean: f64,
    pub sigma_cum: f64,
    #[serde(rename = "Sigma_cum")]
    pub big_sigma_cum: f64,
    pub bound_value: Option<f64>,
}

/// A failed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

/// Final aggregated scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalScalars {
    /// Mean of the regret the guarantee concerns (expected mode).
    pub regret_mean: f64,
    pub regret_stderr: f64,
    pub static_regret_expected_mean: f64,
    pub static_regret_sampled_mean: f64,
    pub dynamic_regret_expected_mean: f64,
    pub vbar_mean: f64,
    pub sigma_cum_mean: f64,
    #[serde(rename = "Sigma_cum_mean")]
    pub big_sigma_cum_mean: f64,
    pub sigma_tilde_cum_mean: f64,
    pub path_length_mean: f64,
    /// Mean over trials of the per-trial bound.
    pub bound_value: Option<f64>,
    /// Mean of the bound with the constant exactly as stated, where it differs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_value_stated: Option<f64>,
    /// `bound_value − regret_mean`.
    pub margin: Option<f64>,
    /// True when the bound was evaluated at estimated quantities.
    pub bound_estimated: bool,
    pub comparator_estimated: bool,
}

/// Aggregated result of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub theorem: Option<Theorem>,
    pub experts: usize,
    /// Base-learner step sizes of ensembles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<f64>>,
    pub trials_completed: usize,
    pub failures: Vec<TrialFailure>,
    pub rows: Vec<SummaryRow>,
    #[serde(rename = "final")]
    pub final_scalars: FinalScalars,
    pub invariants: InvariantCounts,
    pub trials: Vec<TrialOutcome>,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    mean_stderr(&v).0
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs all trials with the worker count from the environment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    run_experiment_with_workers(config, worker_count())
}

/// Runs all trials on `workers` threads and aggregates them in trial order.
pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: usize) -> Result<Summary> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::Experiment {
        failed: 0,
        trials: config.trials,
        first_error: e.to_string(),
    })?;
    let mut results: Vec<(usize, Result<TrialOutcome>)> =
        pool.install(|| (0..config.trials).into_par_iter().map(|i| (i, run_trial(config, i))).collect());
    results.sort_by_key(|r| r.0);
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (trial, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(TrialFailure { trial, error: e.to_string() }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * config.trials as f64 || outcomes.is_empty() {
        return Err(Error::Experiment {
            failed: failures.len(),
            trials: config.trials,
            first_error: failures.first().map(|f| f.error.clone()).unwrap_or_default(),
        });
    }
    aggregate(config, outcomes, failures)
}

fn aggregate(config: &ExperimentConfig, outcomes: Vec<TrialOutcome>, failures: Vec<TrialFailure>) -> Result<Summary> {
    let theorem = config.algorithm.name.theorem();
    let n_rows = outcomes[0].rows.len();
    let rows = (0..n_rows)
        .map(|i| {
            let regrets: Vec<f64> = outcomes.iter().map(|o| o.rows[i].regret).collect();
            let (regret_mean, regret_stderr) = mean_stderr(&regrets);
            SummaryRow {
                round: outcomes[0].rows[i].round,
                regret_mean,
                regret_stderr,
                vbar_mean: mean(outcomes.iter().map(|o| o.rows[i].vbar)),
                sigma_cum: mean(outcomes.iter().map(|o| o.rows[i].sigma_cum)),
                big_sigma_cum: mean(outcomes.iter().map(|o| o.rows[i].big_sigma_cum)),
                bound_value: theorem.map(|_| mean(outcomes.iter().map(|o| o.rows[i].bound.unwrap_or(f64::NAN)))),
            }
        })
        .collect();
    let regrets: Vec<f64> = outcomes.iter().map(|o| o.regret(theorem)).collect();
    let (regret_mean, regret_stderr) = mean_stderr(&regrets);
    let bound = theorem.map(|_| mean(outcomes.iter().map(|o| o.bound.unwrap_or(f64::NAN))));
    let bound_stated =
        outcomes[0].bound_stated.map(|_| mean(outcomes.iter().map(|o| o.bound_stated.unwrap_or(f64::NAN))));
    let sigma_estimated = outcomes.iter().any(|o| o.tracker.sigma_estimated || o.tracker.big_sigma_estimated);
    let mut invariants = InvariantCounts::default();
    for o in &outcomes {
        invariants.add(&o.invariants);
    }
    let final_scalars = FinalScalars {
        regret_mean,
        regret_stderr,
        static_regret_expected_mean: mean(outcomes.iter().map(|o| o.regret_expected)),
        static_regret_sampled_mean: mean(outcomes.iter().map(|o| o.regret_sampled)),
        dynamic_regret_expected_mean: mean(outcomes.iter().map(|o| o.dynamic_regret_expected)),
        vbar_mean: mean(outcomes.iter().map(|o| o.tracker.vbar)),
        sigma_cum_mean: mean(outcomes.iter().map(|o| o.tracker.sigma_cum)),
        big_sigma_cum_mean: mean(outcomes.iter().map(|o| o.tracker.big_sigma_cum)),
        sigma_tilde_cum_mean: mean(outcomes.iter().map(|o| o.tracker.sigma_tilde_cum)),
        path_length_mean: mean(outcomes.iter().map(|o| o.tracker.path_length)),
        bound_value: bound,
        bound_value_stated: bound_stated,
        margin: bound.map(|b| b - regret_mean),
        bound_estimated: sigma_estimated || theorem.is_some_and(Theorem::uses_sigma_tilde),
        comparator_estimated: outcomes.iter().any(|o| o.comparator_estimated),
    };
    Ok(Summary {
        config: config.clone(),
        config_hash: config_hash(config)?,
        theorem,
        experts: pool_size(config)?,
        pool: pool_etas(config)?,
        trials_completed: outcomes.len(),
        failures,
        rows,
        final_scalars,
        invariants,
        trials: outcomes,
    })
}

/// JSON formatter writing every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_float(value))
    }
}

/// `value` with 17 significant digits in scientific notation.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serializes `value` with [`PreciseFormatter`].
pub fn to_precise_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(out).map_err(|e| Error::Io(e.to_string()))
}

/// Git-style content hash: SHA-256 of `"blob <len>\0"` followed by the canonical config JSON.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let body = to_precise_json(config)?;
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", body.len()).as_bytes());
    hasher.update(body.as_bytes());
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// The CSV header.
pub const CSV_HEADER: &str = "round,regret_mean,regret_stderr,vbar_mean,sigma_cum,Sigma_cum,bound_value";

/// Renders the per-cadence rows as CSV.
pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &summary.rows {
        let bound = r.bound_value.map(format_float).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.round,
            format_float(r.regret_mean),
            format_float(r.regret_stderr),
            format_float(r.vbar_mean),
            format_float(r.sigma_cum),
            format_float(r.big_sigma_cum),
            bound
        ));
    }
    out
}

/// Output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Writes `summary` to `dir` as `summary.csv` or `summary.json`; returns the path.
pub fn emit(summary: &Summary, format: OutputFormat, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let (name, body) = match format {
        OutputFormat::Csv => ("summary.csv", summary_csv(summary)),
        OutputFormat::Json => ("summary.json", to_precise_json(summary)?),
    };
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
