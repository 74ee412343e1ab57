//! Regret ledgers, variation trackers, closed-form regret-bound
//! calculators and numeric inequality oracles for the supporting lemmas.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environments::adversarial_variation_exact;
use crate::error::{Error, Result};
use crate::geometry::{project_mahalanobis, random_unit, Domain, Matrix, ProblemParams, SpdMatrix, Vector};
use crate::losses::LossFn;

/// Slack allowed when asserting `lhs ≤ rhs` for lemma oracles.
pub const LEMMA_SLACK: f64 = 1e-9;

/// Which regret to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    /// `Σ f_t(x_t) − Σ f_t(u)` on the sampled functions.
    Sampled,
    /// `Σ F_t(x_t) − Σ F_t(u)` on the expected functions.
    Expected,
}

/// Per-round losses of the learner and of the comparators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    learner_sampled: Vec<f64>,
    learner_expected: Vec<f64>,
    fixed_sampled: Vec<f64>,
    fixed_expected: Vec<f64>,
    dynamic_sampled: Vec<f64>,
    dynamic_expected: Vec<f64>,
    cumulative: [f64; 6],
}

impl RegretLedger {
    /// Empty ledger.
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one round: `f_t` and `F_t` at the learner's decision, at
    /// the fixed comparator `u` and at the round minimizer `u_t`.
    pub fn record(
        &mut self,
        f: &LossFn,
        expected: &LossFn,
        decision: &Vector,
        fixed: &Vector,
        dynamic: &Vector,
    ) -> Result<()> {
        let values = [
            f.eval(decision)?,
            expected.eval(decision)?,
            f.eval(fixed)?,
            expected.eval(fixed)?,
            f.eval(dynamic)?,
            expected.eval(dynamic)?,
        ];
        self.push(values);
        Ok(())
    }

    /// Records precomputed values in the order learner `(f, F)`, fixed `(f, F)`, dynamic `(f, F)`.
    pub fn push(&mut self, values: [f64; 6]) {
        let columns = [
            &mut self.learner_sampled,
            &mut self.learner_expected,
            &mut self.fixed_sampled,
            &mut self.fixed_expected,
            &mut self.dynamic_sampled,
            &mut self.dynamic_expected,
        ];
        for (i, (col, v)) in columns.into_iter().zip(values).enumerate() {
            col.push(v);
            self.cumulative[i] += v;
        }
    }

    /// Rounds recorded.
    pub fn len(&self) -> usize {
        self.learner_sampled.len()
    }

    /// True before the first round.
    pub fn is_empty(&self) -> bool {
        self.learner_sampled.is_empty()
    }

    /// `f_t(x_t)` per round.
    pub fn learner_sampled(&self) -> &[f64] {
        &self.learner_sampled
    }

    /// `F_t(x_t)` per round.
    pub fn learner_expected(&self) -> &[f64] {
        &self.learner_expected
    }

    /// `F_t(u)` per round.
    pub fn fixed_expected(&self) -> &[f64] {
        &self.fixed_expected
    }

    /// `F_t(u_t)` per round.
    pub fn dynamic_expected(&self) -> &[f64] {
        &self.dynamic_expected
    }

    /// Largest gap between a running sum and the recomputed prefix sum.
    pub fn prefix_sum_gap(&self) -> f64 {
        let columns = [
            &self.learner_sampled,
            &self.learner_expected,
            &self.fixed_sampled,
            &self.fixed_expected,
            &self.dynamic_sampled,
            &self.dynamic_expected,
        ];
        columns.iter().zip(self.cumulative).map(|(c, s)| (c.iter().sum::<f64>() - s).abs()).fold(0.0, f64::max)
    }
}

/// Regret against the fixed comparator.
pub fn static_regret(ledger: &RegretLedger, mode: RegretMode) -> f64 {
    match mode {
        RegretMode::Sampled => ledger.cumulative[0] - ledger.cumulative[2],
        RegretMode::Expected => ledger.cumulative[1] - ledger.cumulative[3],
    }
}

/// Regret against the per-round minimizers.
pub fn dynamic_regret(ledger: &RegretLedger, mode: RegretMode) -> f64 {
    match mode {
        RegretMode::Sampled => ledger.cumulative[0] - ledger.cumulative[4],
        RegretMode::Expected => ledger.cumulative[1] - ledger.cumulative[5],
    }
}

/// Running problem-dependent quantities of one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariationTracker {
    /// `V̄_t = Σ_s ‖∇f_s(x_s) − ∇f_{s−1}(x_{s−1})‖²` with a zero gradient before round one.
    pub vbar: f64,
    /// `Σ_s σ_s²`.
    pub sigma_cum: f64,
    /// `Σ_s sup_x ‖∇F_s(x) − ∇F_{s−1}(x)‖²`.
    pub big_sigma_cum: f64,
    /// `max_s σ_s²`.
    pub sigma_max_sq: f64,
    /// `max_s sup_x ‖∇F_s(x) − ∇F_{s−1}(x)‖²`.
    pub big_sigma_max_sq: f64,
    /// `Σ_s sup_x ‖∇f_s(x) − ∇f_{s−1}(x)‖²` over the sampled functions, when gradients are affine.
    pub gradient_variation: Option<f64>,
    /// `Σ_s σ̃_s²` (Monte Carlo estimates).
    pub sigma_tilde_cum: f64,
    /// Path length of the per-round minimizers.
    pub path_length: f64,
    /// True when `σ²` values were estimated rather than exact.
    pub sigma_estimated: bool,
    /// True when adversarial variations were estimated rather than exact.
    pub big_sigma_estimated: bool,
    /// Rounds seen.
    pub rounds: usize,
    #[serde(skip)]
    last_grad: Option<Vector>,
    #[serde(skip)]
    last_sampled: Option<LossFn>,
}

impl VariationTracker {
    /// Fresh tracker.
    pub fn new() -> Self {
        Self { gradient_variation: Some(0.0), ..Self::default() }
    }

    /// Adds the learner's gradient of this round to `V̄`.
    pub fn observe_gradient(&mut self, g: &Vector) {
        let d = match &self.last_grad {
            Some(prev) => (g - prev).norm_squared(),
            None => g.norm_squared(),
        };
        self.vbar += d;
        self.last_grad = Some(g.clone());
        self.rounds += 1;
    }

    /// Adds one round's stochastic variance and adversarial variation.
    pub fn observe_round(&mut self, sigma_sq: f64, big_sigma_sq: f64, sigma_exact: bool, big_sigma_exact: bool) {
        self.sigma_cum += sigma_sq;
        self.big_sigma_cum += big_sigma_sq;
        self.sigma_max_sq = self.sigma_max_sq.max(sigma_sq);
        self.big_sigma_max_sq = self.big_sigma_max_sq.max(big_sigma_sq);
        self.sigma_estimated |= !sigma_exact;
        self.big_sigma_estimated |= !big_sigma_exact;
    }

    /// Adds a `σ̃_t²` estimate.
    pub fn observe_sigma_tilde(&mut self, value: f64) {
        self.sigma_tilde_cum += value;
    }

    /// Adds the sampled function to the gradient variation `V_T`.
    pub fn observe_sampled(&mut self, f: &LossFn, domain: &Domain) -> Result<()> {
        if let Some(total) = self.gradient_variation {
            match adversarial_variation_exact(f, self.last_sampled.as_ref(), domain)? {
                Some(v) => self.gradient_variation = Some(total + v),
                None => self.gradient_variation = None,
            }
        }
        self.last_sampled = Some(f.clone());
        Ok(())
    }
}

/// Regret guarantees with closed-form right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Convex smooth optimistic OMD.
    OmdConvex,
    /// Strongly convex smooth optimistic OMD.
    OmdStronglyConvex,
    /// Exp-concave smooth optimistic OMD.
    OmdExpConcave,
    /// Convex optimistic FTRL.
    FtrlConvex,
    /// Two-layer ensemble for smooth functions (dynamic regret).
    SmoothEnsemble,
    /// Implicit-update OMD for non-smooth functions.
    ImplicitOmd,
    /// Two-layer ensemble for non-smooth functions (dynamic regret).
    NonsmoothEnsemble,
    /// Ensemble with the alternative optimism (dynamic regret).
    AltOptimismEnsemble,
}

impl Theorem {
    /// All theorems.
    pub const ALL: [Theorem; 8] = [
        Theorem::OmdConvex,
        Theorem::OmdStronglyConvex,
        Theorem::OmdExpConcave,
        Theorem::FtrlConvex,
        Theorem::SmoothEnsemble,
        Theorem::ImplicitOmd,
        Theorem::NonsmoothEnsemble,
        Theorem::AltOptimismEnsemble,
    ];

    /// Command-line label.
    pub fn label(self) -> &'static str {
        match self {
            Theorem::OmdConvex => "1",
            Theorem::OmdStronglyConvex => "2",
            Theorem::OmdExpConcave => "3",
            Theorem::SmoothEnsemble => "5",
            Theorem::ImplicitOmd => "6",
            Theorem::NonsmoothEnsemble => "7",
            Theorem::AltOptimismEnsemble => "8",
            Theorem::FtrlConvex => "ftrl-convex",
        }
    }

    /// True when the bound concerns dynamic regret.
    pub fn is_dynamic(self) -> bool {
        matches!(self, Theorem::SmoothEnsemble | Theorem::NonsmoothEnsemble | Theorem::AltOptimismEnsemble)
    }

    /// True when the bound is stated with `σ̃²` instead of `σ²`.
    pub fn uses_sigma_tilde(self) -> bool {
        matches!(self, Theorem::ImplicitOmd | Theorem::NonsmoothEnsemble | Theorem::AltOptimismEnsemble)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL.into_iter().find(|t| t.label() == s).ok_or_else(|| {
            Error::Config(format!("unknown theorem {s:?}; expected one of 1, 2, 3, 5, 6, 7, 8, ftrl-convex"))
        })
    }
}

/// Measured problem quantities a bound is evaluated at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// `σ²_{1:T}`.
    pub sigma_cum: f64,
    /// `Σ²_{1:T}`.
    pub big_sigma_cum: f64,
    /// `σ̃²_{1:T}`.
    pub sigma_tilde_cum: f64,
    /// Per-round maximum of `σ_t²`, used when the parameters do not declare one.
    pub sigma_max_sq: f64,
    /// Per-round maximum of the adversarial variation, used when the parameters do not declare one.
    pub big_sigma_max_sq: f64,
    /// Comparator path length `P_T`.
    pub path_length: f64,
    /// Number of base learners `N`.
    pub experts: usize,
    /// Decision dimension `d`.
    pub dim: usize,
}

/// Evaluates the closed-form right-hand side of `theorem`.
pub fn bound_value(theorem: Theorem, params: &ProblemParams, inputs: &BoundInputs) -> Result<f64> {
    params.validate()?;
    let d = params.d;
    let g = params.g;
    let s2 = inputs.sigma_cum.max(0.0);
    let b2 = inputs.big_sigma_cum.max(0.0);
    let st2 = inputs.sigma_tilde_cum.max(0.0);
    let p = inputs.path_length.max(0.0);
    let experts = || -> Result<f64> {
        if inputs.experts == 0 {
            return Err(Error::Config("dynamic-regret bounds need the number of base learners".into()));
        }
        Ok((inputs.experts as f64).ln())
    };
    let value = match theorem {
        Theorem::OmdConvex => {
            let l = params.smoothness("the convex OMD bound")?;
            5.0 * 10f64.sqrt() * d * d * l
                + 2.5 * 5f64.sqrt() * d * g
                + 5.0 * SQRT_2 * d * s2.sqrt()
                + 5.0 * d * b2.sqrt()
        }
        Theorem::OmdStronglyConvex => {
            let l = params.smoothness("the strongly convex OMD bound")?;
            let lambda = params.strong_convexity("the strongly convex OMD bound")?;
            let smax = params.sigma_max_sq.unwrap_or(inputs.sigma_max_sq);
            let bmax = params.big_sigma_max_sq.unwrap_or(inputs.big_sigma_max_sq);
            let scale = 2.0 * smax + bmax;
            let log_term = if scale > 0.0 { ((2.0 * s2 + b2) / scale + 1.0).ln() } else { 0.0 };
            (32.0 * smax + 16.0 * bmax) / lambda * log_term
                + (64.0 * smax + 32.0 * bmax) / lambda
                + 16.0 * l * l * d * d / lambda * (1.0 + 8.0 * SQRT_2 * l / lambda).ln()
                + (16.0 * l * l * d * d + 4.0 * g * g) / lambda
                + lambda * d * d / 4.0
        }
        Theorem::OmdExpConcave => {
            let l = params.smoothness("the exp-concave OMD bound")?;
            let beta = params.ons_beta()?;
            if inputs.dim == 0 {
                return Err(Error::Config("the exp-concave OMD bound needs the dimension".into()));
            }
            let dim = inputs.dim as f64;
            16.0 * dim / beta * (beta / dim * s2 + beta / (2.0 * dim) * b2 + beta / (8.0 * dim) * g * g + 1.0).ln()
                + 16.0 * dim / beta * (32.0 * l * l + 1.0).ln()
                + d * d * (1.0 + beta / 2.0 * g * g)
        }
        Theorem::FtrlConvex => {
            let l = params.smoothness("the convex FTRL bound")?;
            6.0 * d * s2.sqrt()
                + 3.0 * SQRT_2 * d * b2.sqrt()
                + 2.0 * (9.0 * d.powi(4) * l * l + 6.0 * d * d * g * g).sqrt()
                + 1.5 * SQRT_2 * d * g
        }
        Theorem::SmoothEnsemble => {
            let l = params.smoothness("the smooth ensemble bound")?;
            let ln_n = experts()?;
            let a = 5.0 * (d * d * ln_n).sqrt() + 2.0 * (d * d + 2.0 * d * p).sqrt();
            g * a
                + a * (2.0 * SQRT_2 * s2.sqrt() + 2.0 * b2.sqrt())
                + (58.0 * ln_n + 16.0) * d * d * l
                + 32.0 * d * l * p
                + g * g / l
        }
        Theorem::ImplicitOmd => {
            5.0 * d * (1.0 + 5.0 * g * g).sqrt() + 10.0 * SQRT_2 * d * st2.sqrt() + 10.0 * d * b2.sqrt()
        }
        Theorem::NonsmoothEnsemble => {
            let ln_n = experts()?;
            (d * (ln_n + 4.0) + 2.0 * (2.0 * (d * d + 2.0 * d * p)).sqrt())
                * (g + 2.0 * (2.0 * st2).sqrt() + 2.0 * b2.sqrt())
                + 4.0 * g.powi(4)
                + ln_n
                + 4.0
        }
        Theorem::AltOptimismEnsemble => {
            let l = params.smoothness("the alternative-optimism ensemble bound")?;
            let ln_n = experts()?;
            let k = ln_n + 2.0 * d * d;
            (2.0 * ln_n + 4.0 * d * d + 4.0 * (d * d + 2.0 * d * p).sqrt()) * ((2.0 * st2).sqrt() + b2.sqrt())
                + k * (5f64.sqrt() * g + 4.0 * d * l * k.sqrt())
                + 2.0 * g * (d * d + 2.0 * d * p).sqrt()
                + 6.0 * l * (d * d + 2.0 * d * p)
        }
    };
    Ok(value)
}

/// The implicit-update OMD bound with the constant `5D√(1+G²)` exactly as
/// stated, reported next to the safe `5D√(1+5G²)` form.
pub fn implicit_omd_stated_bound(params: &ProblemParams, inputs: &BoundInputs) -> Result<f64> {
    params.validate()?;
    let (d, g) = (params.d, params.g);
    Ok(5.0 * d * (1.0 + g * g).sqrt()
        + 10.0 * SQRT_2 * d * inputs.sigma_tilde_cum.max(0.0).sqrt()
        + 10.0 * d * inputs.big_sigma_cum.max(0.0).sqrt())
}

/// Supporting inequalities checked numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// `Σ l_t/√(δ + Σ_{i≤t} l_i) ≤ 2√(δ + Σ l_t)`.
    Sum,
    /// `Σ l_t/√(δ + Σ_{i<t} l_i) ≤ 4√(δ + Σ l_t) + max l_t`.
    SelfTuning,
    /// `Σ u_tᵀS_t⁻¹u_t ≤ d·ln(1 + Σ‖u_t‖²/(dε))`.
    LogDet,
    /// `a·ln(bA + 1) − cA ≤ a·ln(ab/c + 1)`.
    LnPq,
    /// Cumulative gradient-variation decomposition.
    CumulativeGradientVariation,
    /// Single-round gradient-variation decomposition.
    GradientVariationStep,
    /// Logarithmic sum for the strongly convex step size.
    StronglyConvexLogSum,
    /// Non-expansiveness of a regularized linear step.
    Stability,
}

impl Lemma {
    /// All lemmas.
    pub const ALL: [Lemma; 8] = [
        Lemma::Sum,
        Lemma::SelfTuning,
        Lemma::LogDet,
        Lemma::LnPq,
        Lemma::CumulativeGradientVariation,
        Lemma::GradientVariationStep,
        Lemma::StronglyConvexLogSum,
        Lemma::Stability,
    ];

    /// Snake-case name.
    pub fn name(self) -> &'static str {
        match self {
            Lemma::Sum => "sum",
            Lemma::SelfTuning => "self_tuning",
            Lemma::LogDet => "log_det",
            Lemma::LnPq => "ln_pq",
            Lemma::CumulativeGradientVariation => "cumulative_gradient_variation",
            Lemma::GradientVariationStep => "gradient_variation_step",
            Lemma::StronglyConvexLogSum => "strongly_convex_log_sum",
            Lemma::Stability => "stability",
        }
    }
}

/// Inputs of a lemma oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum LemmaInput {
    /// Non-negative sequence with offset `δ` (sum and self-tuning lemmas).
    Sequence { l: Vec<f64>, delta: f64 },
    /// Vectors `u_t` and regularization `ε` (log-det lemma).
    Vectors { u: Vec<Vector>, epsilon: f64 },
    /// Scalars of the ln-pq lemma.
    Scalars { a: f64, b: f64, c: f64, big_a: f64 },
    /// Decisions with sampled and expected functions and the smoothness of the expected ones.
    GradientTrace { points: Vec<Vector>, sampled: Vec<LossFn>, expected: Vec<LossFn>, smoothness: f64 },
    /// Per-round variances and variations with modulus `λ`.
    Variances { lambda: f64, sigma_sq: Vec<f64>, big_sigma_sq: Vec<f64> },
    /// Two regularized linear steps from `center` with linear terms `a`
    /// and `a'` under the metric `H` (identity when absent).
    Steps { domain: Domain, metric: Option<Matrix>, center: Vector, a: Vector, a_prime: Vector },
}

fn invalid(lemma: Lemma, why: &str) -> Error {
    Error::InvalidInput(format!("{} lemma: {why}", lemma.name()))
}

fn non_negative(lemma: Lemma, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid(lemma, "values must be finite and non-negative"));
    }
    Ok(())
}

fn ratio(num: f64, den_sq: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den_sq.sqrt()
    }
}

/// Evaluates both sides of `lemma` on `input`.
pub fn lemma_oracle(lemma: Lemma, input: &LemmaInput) -> Result<(f64, f64)> {
    match (lemma, input) {
        (Lemma::Sum, LemmaInput::Sequence { l, delta }) => {
            non_negative(lemma, l)?;
            non_negative(lemma, &[*delta])?;
            let mut acc = *delta;
            let mut lhs = 0.0;
            for &v in l {
                acc += v;
                lhs += ratio(v, acc);
            }
            Ok((lhs, 2.0 * acc.sqrt()))
        }
        (Lemma::SelfTuning, LemmaInput::Sequence { l, delta }) => {
            non_negative(lemma, l)?;
            if !(*delta >= 1.0) || !delta.is_finite() {
                return Err(invalid(lemma, "the offset delta must be at least 1"));
            }
            let mut acc = *delta;
            let mut lhs = 0.0;
            let mut max = 0.0_f64;
            for &v in l {
                lhs += ratio(v, acc);
                acc += v;
                max = max.max(v);
            }
            Ok((lhs, 4.0 * acc.sqrt() + max))
        }
        (Lemma::LogDet, LemmaInput::Vectors { u, epsilon }) => {
            if !(*epsilon > 0.0) || !epsilon.is_finite() {
                return Err(invalid(lemma, "epsilon must be positive"));
            }
            let dim = u.first().map_or(1, |v| v.len());
            if u.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
                return Err(invalid(lemma, "vectors must be finite and share a dimension"));
            }
            let mut s = Matrix::identity(dim, dim) * *epsilon;
            let mut lhs = 0.0;
            let mut total = 0.0;
            for v in u {
                s += v * v.transpose();
                let chol = s.clone().cholesky().ok_or(Error::SolverFailure { residual: f64::NAN, iterations: 0 })?;
                lhs += v.dot(&chol.solve(v));
                total += v.norm_squared();
            }
            let d = dim as f64;
            Ok((lhs, d * (1.0 + total / (d * epsilon)).ln()))
        }
        (Lemma::LnPq, LemmaInput::Scalars { a, b, c, big_a }) => {
            non_negative(lemma, &[*a, *b, *big_a])?;
            if !(*c > 0.0) || !c.is_finite() {
                return Err(invalid(lemma, "c must be positive"));
            }
            Ok((a * (b * big_a).ln_1p() - c * big_a, a * (a * b / c).ln_1p()))
        }
        (Lemma::CumulativeGradientVariation, LemmaInput::GradientTrace { points, sampled, expected, smoothness }) => {
            let trace = GradientTrace::new(lemma, points, sampled, expected, *smoothness)?;
            let l2 = smoothness * smoothness;
            let mut lhs = trace.gf[0].norm_squared();
            let mut rhs = trace.gf[0].norm_squared() + 8.0 * (&trace.gf[0] - &trace.gfe[0]).norm_squared();
            for t in 1..points.len() {
                lhs += (&trace.gf[t] - &trace.gf[t - 1]).norm_squared();
                rhs += 4.0 * l2 * (&points[t] - &points[t - 1]).norm_squared()
                    + 8.0 * (&trace.gf[t] - &trace.gfe[t]).norm_squared()
                    + 4.0 * (expected[t].grad(&points[t - 1])? - &trace.gfe[t - 1]).norm_squared();
            }
            Ok((lhs, rhs))
        }
        (Lemma::GradientVariationStep, LemmaInput::GradientTrace { points, sampled, expected, smoothness }) => {
            let trace = GradientTrace::new(lemma, points, sampled, expected, *smoothness)?;
            let t = points.len() - 1;
            if t == 0 {
                let g = trace.gf[0].norm_squared();
                return Ok((g, g));
            }
            let lhs = (&trace.gf[t] - &trace.gf[t - 1]).norm_squared();
            let rhs = 4.0 * (&trace.gf[t] - &trace.gfe[t]).norm_squared()
                + 4.0 * (expected[t].grad(&points[t - 1])? - &trace.gfe[t - 1]).norm_squared()
                + 4.0 * smoothness * smoothness * (&points[t] - &points[t - 1]).norm_squared()
                + 4.0 * (&trace.gfe[t - 1] - &trace.gf[t - 1]).norm_squared();
            Ok((lhs, rhs))
        }
        (Lemma::StronglyConvexLogSum, LemmaInput::Variances { lambda, sigma_sq, big_sigma_sq }) => {
            non_negative(lemma, sigma_sq)?;
            non_negative(lemma, big_sigma_sq)?;
            if sigma_sq.len() != big_sigma_sq.len() {
                return Err(invalid(lemma, "sequences must have equal length"));
            }
            if !(*lambda > 0.0) || !lambda.is_finite() {
                return Err(invalid(lemma, "lambda must be positive"));
            }
            let smax = sigma_sq.iter().copied().fold(0.0, f64::max);
            let bmax = big_sigma_sq.iter().copied().fold(0.0, f64::max);
            let scale = 2.0 * smax + bmax;
            let mut lhs = 0.0;
            let mut total = 0.0;
            for (t, (s, b)) in sigma_sq.iter().zip(big_sigma_sq).enumerate() {
                let term = 2.0 * s + b;
                lhs += term / (lambda * (t + 1) as f64);
                total += term;
            }
            if scale == 0.0 {
                return Ok((lhs, 0.0));
            }
            Ok((lhs, scale / lambda * (total / scale + 1.0).ln() + 2.0 * scale / lambda))
        }
        (Lemma::Stability, LemmaInput::Steps { domain, metric, center, a, a_prime }) => {
            domain.validate()?;
            let dim = domain.dim();
            let h = match metric {
                Some(m) => SpdMatrix::from_matrix(m.clone())?,
                None => SpdMatrix::identity(dim),
            };
            for v in [center, a, a_prime] {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
                }
            }
            let x = project_mahalanobis(domain, &h, &(center - h.solve(a)), 1e-13)?;
            let y = project_mahalanobis(domain, &h, &(center - h.solve(a_prime)), 1e-13)?;
            Ok((h.quad(&(&x - &y)).max(0.0).sqrt(), h.inv_quad(&(a - a_prime)).max(0.0).sqrt()))
        }
        _ => Err(invalid(lemma, "input kind does not match the lemma")),
    }
}

struct GradientTrace {
    gf: Vec<Vector>,
    gfe: Vec<Vector>,
}

impl GradientTrace {
    fn new(lemma: Lemma, points: &[Vector], sampled: &[LossFn], expected: &[LossFn], smoothness: f64) -> Result<Self> {
        if points.is_empty() || points.len() != sampled.len() || points.len() != expected.len() {
            return Err(invalid(lemma, "points, sampled and expected functions must be non-empty and of equal length"));
        }
        let dim = points[0].len();
        for f in expected {
            match f.smoothness(dim) {
                Some(l) if l <= smoothness * (1.0 + 1e-12) + 1e-15 => {}
                _ => return Err(invalid(lemma, "expected functions must be smooth with constant at most the given L")),
            }
        }
        let gf = points.iter().zip(sampled).map(|(x, f)| f.grad(x)).collect::<Result<Vec<_>>>()?;
        let gfe = points.iter().zip(expected).map(|(x, f)| f.grad(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self { gf, gfe })
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Vector {
    Vector::from_fn(dim, |_, _| rng.gen_range(-scale..scale))
}

fn random_sequence<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let n = rng.gen_range(1..=60);
    let scale = log_uniform(rng, 1e-3, 1e3);
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => 0.0,
            1 => scale * 10.0,
            _ => scale * rng.gen::<f64>(),
        })
        .collect()
}

fn random_smooth_loss<R: Rng + ?Sized>(rng: &mut R, dim: usize, max_curvature: f64) -> LossFn {
    match rng.gen_range(0..3) {
        0 => LossFn::linear(random_vector(rng, dim, 2.0)),
        1 => LossFn::shifted_quadratic(random_vector(rng, dim, 2.0), rng.gen_range(0.0..max_curvature)),
        _ => {
            let a = random_unit(dim, rng) * (max_curvature * rng.gen::<f64>()).sqrt();
            LossFn::squared_linear(a, rng.gen_range(-1.0..1.0))
        }
    }
}

fn random_domain<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Domain {
    match rng.gen_range(0..3) {
        0 => Domain::ball(dim, rng.gen_range(0.2..3.0)),
        1 => Domain::cube(dim, -rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)),
        _ => Domain::simplex(dim),
    }
}

/// Draws a random valid instance for `lemma`.
pub fn random_lemma_input<R: Rng + ?Sized>(lemma: Lemma, rng: &mut R) -> LemmaInput {
    match lemma {
        Lemma::Sum => LemmaInput::Sequence {
            l: random_sequence(rng),
            delta: if rng.gen_bool(0.2) { 0.0 } else { log_uniform(rng, 1e-4, 1e3) },
        },
        Lemma::SelfTuning => LemmaInput::Sequence { l: random_sequence(rng), delta: 1.0 + log_uniform(rng, 1e-6, 1e3) },
        Lemma::LogDet => {
            let dim = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=40);
            let scale = log_uniform(rng, 1e-2, 1e2);
            LemmaInput::Vectors {
                u: (0..n).map(|_| random_vector(rng, dim, scale)).collect(),
                epsilon: log_uniform(rng, 1e-3, 1e2),
            }
        }
        Lemma::LnPq => {
            let a = log_uniform(rng, 1e-3, 1e3);
            let b = log_uniform(rng, 1e-3, 1e3);
            let c = log_uniform(rng, 1e-3, 1e3);
            let big_a = match rng.gen_range(0..4) {
                0 => a / c,
                1 => 0.0,
                _ => log_uniform(rng, 1e-4, 1e4),
            };
            LemmaInput::Scalars { a, b, c, big_a }
        }
        Lemma::CumulativeGradientVariation | Lemma::GradientVariationStep => {
            let dim = rng.gen_range(1..=4);
            let n = if lemma == Lemma::GradientVariationStep { rng.gen_range(1..=2) } else { rng.gen_range(1..=30) };
            let smoothness = log_uniform(rng, 0.05, 5.0);
            let points: Vec<Vector> = (0..n).map(|_| random_vector(rng, dim, 2.0)).collect();
            let expected: Vec<LossFn> = (0..n).map(|_| random_smooth_loss(rng, dim, smoothness)).collect();
            let sampled = expected
                .iter()
                .map(|f| match rng.gen_range(0..3) {
                    0 => f.clone(),
                    1 => LossFn::sum(vec![(1.0, f.clone()), (1.0, LossFn::linear(random_vector(rng, dim, 1.0)))]),
                    _ => random_smooth_loss(rng, dim, 3.0 * smoothness),
                })
                .collect();
            LemmaInput::GradientTrace { points, sampled, expected, smoothness }
        }
        Lemma::StronglyConvexLogSum => {
            let n = rng.gen_range(1..=80);
            let s = log_uniform(rng, 1e-3, 1e2);
            let b = log_uniform(rng, 1e-3, 1e2);
            let pick = |scale: f64, rng: &mut R| if rng.gen_bool(0.15) { 0.0 } else { scale * rng.gen::<f64>() };
            let sigma_sq = (0..n).map(|_| pick(s, rng)).collect();
            let big_sigma_sq = (0..n).map(|_| pick(b, rng)).collect();
            LemmaInput::Variances { lambda: log_uniform(rng, 1e-2, 1e2), sigma_sq, big_sigma_sq }
        }
        Lemma::Stability => {
            let dim = rng.gen_range(1..=4);
            let domain = random_domain(rng, dim);
            let metric = if rng.gen_bool(0.5) {
                let q = random_vector(rng, dim * dim, 1.0);
                let q = Matrix::from_column_slice(dim, dim, q.as_slice());
                let qr = q.qr().q();
                let eig = Matrix::from_diagonal(&Vector::from_fn(dim, |_, _| rng.gen_range(0.5..3.0)));
                let m = &qr * eig * qr.transpose();
                Some((&m + m.transpose()) * 0.5)
            } else {
                None
            };
            LemmaInput::Steps {
                domain,
                metric,
                center: random_vector(rng, dim, 2.0),
                a: random_vector(rng, dim, 3.0),
                a_prime: random_vector(rng, dim, 3.0),
            }
        }
    }
}

/// Outcome of fuzzing one lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub lemma: Lemma,
    pub instances: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` observed.
    pub worst_gap: f64,
}

impl FuzzReport {
    /// True when no instance violated the inequality.
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `lemma` on `n` random instances drawn from a stream seeded by `seed`.
pub fn fuzz_lemma(lemma: Lemma, n: usize, seed: u64) -> Result<FuzzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lemma as u64 + 1);
    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..n {
        let input = random_lemma_input(lemma, &mut rng);
        let (lhs, rhs) = lemma_oracle(lemma, &input)?;
        let gap = lhs - rhs;
        worst_gap = worst_gap.max(gap);
        if !(lhs <= rhs + LEMMA_SLACK) {
            violations += 1;
        }
    }
    Ok(FuzzReport { lemma, instances: n, violations, worst_gap })
}

/// Fuzzes every lemma.
pub fn fuzz_all_lemmas(n: usize, seed: u64) -> Result<Vec<FuzzReport>> {
    Lemma::ALL.into_iter().map(|l| fuzz_lemma(l, n, seed)).collect()
}
