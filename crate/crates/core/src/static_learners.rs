//! Static-regret learners: optimistic OMD (convex, strongly convex,
//! exp-concave), their optimistic FTRL counterparts, and implicit-update
//! OMD for non-smooth losses.
//!
//! Every learner starts at the domain's initial point and treats the
//! gradient of round zero as the zero vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ensure_dim, ensure_finite, project_mahalanobis, Domain, ProblemParams, SpdMatrix, Vector, DEFAULT_TOL,
};
use crate::losses::{LossFn, PROX_TOL};

/// How a learner's step size is expected to evolve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// `η_t ≤ η_{t−1}`.
    NonIncreasing,
    /// `η_t` equals the given value.
    Exactly(f64),
}

/// Step size used in a round together with the rule it must obey.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    pub eta: f64,
    pub rule: StepRule,
}

/// Two sides of the per-round stability inequality
/// `‖x̂_{t+1} − x_t‖ ≤ η_t‖∇f_t(x_t) − ∇f_{t−1}(x_{t−1})‖`
/// (or its local-norm analogue for matrix regularizers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub lhs: f64,
    pub rhs: f64,
}

/// Meta-learner telemetry of an ensemble round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaReport {
    /// Weights `p_{t+1}` that produced the next decision.
    pub weights: Vec<f64>,
    /// Learning rate `ε_t` used to form `p_{t+1}`.
    pub rate: f64,
    /// Feedback loss `ℓ_t`.
    pub feedback: Vec<f64>,
    /// Optimism `m_t` that produced `p_t`.
    pub optimism: Vec<f64>,
    /// Base decisions `x_{t,i}` played this round.
    pub base_decisions: Vec<Vector>,
    /// Base decisions `x_{t+1,i}` for the next round.
    pub next_base_decisions: Vec<Vector>,
    /// Base-learner stability checks.
    pub base_stability: Vec<Stability>,
}

/// Outcome of one `observe` call.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Gradient (or selected subgradient) at the decision played this round.
    pub grad: Vector,
    /// Step size of this round.
    pub step: Option<StepCheck>,
    /// Stability inequality of this round.
    pub stability: Option<Stability>,
    /// Ensemble telemetry.
    pub meta: Option<MetaReport>,
}

/// A learner playing `x_t`, observing the round function `f_t`, and moving to `x_{t+1}`.
pub trait OnlineLearner: Send {
    /// Short identifier.
    fn name(&self) -> &'static str;
    /// Current decision `x_t`.
    fn decision(&self) -> &Vector;
    /// Consumes `f_t` and advances to `x_{t+1}`.
    fn observe(&mut self, f: &LossFn) -> Result<StepReport>;
}

fn check_gradient(g: &Vector, dim: usize) -> Result<()> {
    ensure_dim(g, dim)?;
    ensure_finite(g, "gradient")
}

/// Step-size schedule of Euclidean optimistic OMD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OmdSchedule {
    /// `η_t = D/√(δ + 4G² + V̄_{t−1})`.
    SelfConfident { diameter: f64, grad_bound: f64, delta: f64 },
    /// `η_t = 2/(λt)`.
    StronglyConvex { lambda: f64 },
    /// `η_t = η`.
    Fixed { eta: f64 },
}

/// Optimistic online mirror descent with the Euclidean regularizer and the
/// last gradient as optimism: two projected gradient steps per round.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticOmd {
    domain: Domain,
    schedule: OmdSchedule,
    xhat: Vector,
    x: Vector,
    prev_grad: Vector,
    vbar: f64,
    round: usize,
    eta: f64,
}

impl OptimisticOmd {
    fn with_schedule(domain: Domain, schedule: OmdSchedule) -> Result<Self> {
        domain.validate()?;
        let x = domain.initial_point();
        let d = domain.dim();
        let mut learner =
            Self { domain, schedule, xhat: x.clone(), x, prev_grad: Vector::zeros(d), vbar: 0.0, round: 1, eta: 0.0 };
        learner.eta = learner.step_size(1);
        if !(learner.eta > 0.0) || !learner.eta.is_finite() {
            return Err(Error::Config(format!("optimistic OMD step size {} is invalid", learner.eta)));
        }
        Ok(learner)
    }

    /// Convex smooth losses: self-confident step with `δ = 10D²L²`.
    pub fn convex(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        let l = params.smoothness("optimistic OMD (convex)")?;
        let delta = 10.0 * params.d * params.d * l * l;
        Self::with_schedule(domain, OmdSchedule::SelfConfident { diameter: params.d, grad_bound: params.g, delta })
    }

    /// Strongly convex smooth losses: `η_t = 2/(λt)`.
    pub fn strongly_convex(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        let lambda = params.strong_convexity("optimistic OMD (strongly convex)")?;
        Self::with_schedule(domain, OmdSchedule::StronglyConvex { lambda })
    }

    /// Constant step size `η`.
    pub fn fixed(domain: Domain, eta: f64) -> Result<Self> {
        Self::with_schedule(domain, OmdSchedule::Fixed { eta })
    }

    fn step_size(&self, round: usize) -> f64 {
        match self.schedule {
            OmdSchedule::SelfConfident { diameter, grad_bound, delta } => {
                diameter / (delta + 4.0 * grad_bound * grad_bound + self.vbar).sqrt()
            }
            OmdSchedule::StronglyConvex { lambda } => 2.0 / (lambda * round as f64),
            OmdSchedule::Fixed { eta } => eta,
        }
    }

    fn rule(&self) -> StepRule {
        match self.schedule {
            OmdSchedule::StronglyConvex { lambda } => StepRule::Exactly(2.0 / (lambda * self.round as f64)),
            _ => StepRule::NonIncreasing,
        }
    }

    /// Current step size `η_t`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `x̂_t`.
    pub fn xhat(&self) -> &Vector {
        &self.xhat
    }

    /// `V̄_{t−1}`.
    pub fn vbar(&self) -> f64 {
        self.vbar
    }

    /// Round index `t` of the decision currently held.
    pub fn round(&self) -> usize {
        self.round
    }

    /// One round given `g = ∇f_t(x_t)`; returns `x_{t+1}`.
    pub fn step(&mut self, g: &Vector) -> Result<Vector> {
        self.step_with_report(g).map(|(x, _, _)| x)
    }

    fn step_with_report(&mut self, g: &Vector) -> Result<(Vector, StepCheck, Stability)> {
        check_gradient(g, self.domain.dim())?;
        if self.round == 0 {
            return Err(Error::InvalidState("round index must start at 1".into()));
        }
        let eta_t = self.eta;
        let check = StepCheck { eta: eta_t, rule: self.rule() };
        let xhat_next = self.domain.project(&(&self.xhat - g * eta_t))?;
        let diff = g - &self.prev_grad;
        let stability = Stability { lhs: (&xhat_next - &self.x).norm(), rhs: eta_t * diff.norm() };
        self.vbar += diff.norm_squared();
        self.round += 1;
        self.eta = self.step_size(self.round);
        self.x = self.domain.project(&(&xhat_next - g * self.eta))?;
        self.xhat = xhat_next;
        self.prev_grad = g.clone();
        Ok((self.x.clone(), check, stability))
    }
}

impl OnlineLearner for OptimisticOmd {
    fn name(&self) -> &'static str {
        match self.schedule {
            OmdSchedule::SelfConfident { .. } => "omd_convex",
            OmdSchedule::StronglyConvex { .. } => "omd_sc",
            OmdSchedule::Fixed { .. } => "omd_fixed",
        }
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let (_, step, stability) = self.step_with_report(&g)?;
        Ok(StepReport { grad: g, step: Some(step), stability: Some(stability), meta: None })
    }
}

/// Optimistic OMD with the online-Newton regularizer
/// `H_t = (1 + βG²/2)I + (β/2)Σ_{s<t}∇f_s∇f_sᵀ` for exp-concave losses.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineNewtonOmd {
    domain: Domain,
    h: SpdMatrix,
    beta: f64,
    xhat: Vector,
    x: Vector,
    prev_grad: Vector,
    tol: f64,
}

impl OnlineNewtonOmd {
    /// Uses `β = ½·min{1/(4GD), α}`.
    pub fn new(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        let beta = params.ons_beta()?;
        let d = domain.dim();
        let h = SpdMatrix::scaled_identity(d, 1.0 + 0.5 * beta * params.g * params.g)?;
        let x = domain.initial_point();
        Ok(Self { domain, h, beta, xhat: x.clone(), x, prev_grad: Vector::zeros(d), tol: DEFAULT_TOL })
    }

    /// `β`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Current metric `H_t`.
    pub fn metric(&self) -> &SpdMatrix {
        &self.h
    }

    /// `x̂_t`.
    pub fn xhat(&self) -> &Vector {
        &self.xhat
    }

    /// One round given `g = ∇f_t(x_t)`; returns `x_{t+1}`.
    pub fn step(&mut self, g: &Vector) -> Result<Vector> {
        self.step_with_report(g).map(|(x, _)| x)
    }

    fn step_with_report(&mut self, g: &Vector) -> Result<(Vector, Stability)> {
        check_gradient(g, self.domain.dim())?;
        let target = &self.xhat - self.h.solve(g);
        let xhat_next = project_mahalanobis(&self.domain, &self.h, &target, self.tol)?;
        let diff = g - &self.prev_grad;
        let step = &xhat_next - &self.x;
        let stability =
            Stability { lhs: self.h.quad(&step).max(0.0).sqrt(), rhs: self.h.inv_quad(&diff).max(0.0).sqrt() };
        self.h.rank_one_update_in_place(g, 0.5 * self.beta)?;
        let target = &xhat_next - self.h.solve(g);
        self.x = project_mahalanobis(&self.domain, &self.h, &target, self.tol)?;
        self.xhat = xhat_next;
        self.prev_grad = g.clone();
        Ok((self.x.clone(), stability))
    }
}

impl OnlineLearner for OnlineNewtonOmd {
    fn name(&self) -> &'static str {
        "ons"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let (_, stability) = self.step_with_report(&g)?;
        Ok(StepReport { grad: g, step: None, stability: Some(stability), meta: None })
    }
}

/// Optimistic FTRL on linearized losses with the adaptive regularizer
/// `‖x‖²/η_t`, `η_t = D²/(δ + Σ_{s<t} η_s‖∇f_s(x_s) − ∇f_{s−1}(x_{s−1})‖²)`
/// and `δ = √(9D⁴L² + 6D²G²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FtrlConvex {
    domain: Domain,
    diameter: f64,
    delta: f64,
    sum_grad: Vector,
    prev_grad: Vector,
    weighted_variation: f64,
    eta: f64,
    x: Vector,
}

impl FtrlConvex {
    pub fn new(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        let l = params.smoothness("optimistic FTRL (convex)")?;
        let (dd, g) = (params.d, params.g);
        let delta = (9.0 * dd.powi(4) * l * l + 6.0 * dd * dd * g * g).sqrt();
        let d = domain.dim();
        let eta = dd * dd / delta;
        let x = domain.project(&Vector::zeros(d))?;
        Ok(Self {
            domain,
            diameter: dd,
            delta,
            sum_grad: Vector::zeros(d),
            prev_grad: Vector::zeros(d),
            weighted_variation: 0.0,
            eta,
            x,
        })
    }

    /// `δ`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Current `η_t`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// One round given `g = ∇f_t(x_t)`; returns `x_{t+1}`.
    pub fn step(&mut self, g: &Vector) -> Result<Vector> {
        self.step_with_report(g).map(|(x, _)| x)
    }

    fn step_with_report(&mut self, g: &Vector) -> Result<(Vector, StepCheck)> {
        check_gradient(g, self.domain.dim())?;
        let check = StepCheck { eta: self.eta, rule: StepRule::NonIncreasing };
        self.weighted_variation += self.eta * (g - &self.prev_grad).norm_squared();
        self.eta = self.diameter * self.diameter / (self.delta + self.weighted_variation);
        self.sum_grad += g;
        self.x = self.domain.project(&((&self.sum_grad + g) * (-0.5 * self.eta)))?;
        self.prev_grad = g.clone();
        Ok((self.x.clone(), check))
    }
}

impl OnlineLearner for FtrlConvex {
    fn name(&self) -> &'static str {
        "ftrl_convex"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let (_, step) = self.step_with_report(&g)?;
        Ok(StepReport { grad: g, step: Some(step), stability: None, meta: None })
    }
}

/// Optimistic FTRL for strongly convex losses with the surrogate
/// `⟨∇f_s(x_s), x − x_s⟩ + (λ/2)‖x − x_s‖²` and the anchor `(λ/2)‖x − x₀‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FtrlStronglyConvex {
    domain: Domain,
    lambda: f64,
    x0: Vector,
    sum_x: Vector,
    sum_grad: Vector,
    round: usize,
    x: Vector,
}

impl FtrlStronglyConvex {
    pub fn new(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        let lambda = params.strong_convexity("optimistic FTRL (strongly convex)")?;
        let x0 = domain.initial_point();
        let d = domain.dim();
        Ok(Self { domain, lambda, x: x0.clone(), x0, sum_x: Vector::zeros(d), sum_grad: Vector::zeros(d), round: 1 })
    }

    /// One round given `g = ∇f_t(x_t)`; returns `x_{t+1}`.
    pub fn step(&mut self, g: &Vector) -> Result<Vector> {
        check_gradient(g, self.domain.dim())?;
        self.sum_x += &self.x;
        self.sum_grad += g;
        let t = self.round as f64;
        let centre = ((&self.x0 + &self.sum_x) * self.lambda - &self.sum_grad - g) / (self.lambda * (t + 1.0));
        self.x = self.domain.project(&centre)?;
        self.round += 1;
        Ok(self.x.clone())
    }
}

impl OnlineLearner for FtrlStronglyConvex {
    fn name(&self) -> &'static str {
        "ftrl_sc"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        self.step(&g)?;
        Ok(StepReport { grad: g, step: None, stability: None, meta: None })
    }
}

/// Optimistic FTRL for exp-concave losses with the surrogate
/// `⟨g_s, x − x_s⟩ + (β/2)⟨g_s, x − x_s⟩²` and regularizer `½(1 + βG²)‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FtrlExpConcave {
    domain: Domain,
    beta: f64,
    hessian: SpdMatrix,
    linear: Vector,
    x: Vector,
    tol: f64,
}

impl FtrlExpConcave {
    pub fn new(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        let beta = params.ons_beta()?;
        let d = domain.dim();
        let hessian = SpdMatrix::scaled_identity(d, 1.0 + beta * params.g * params.g)?;
        let x = domain.project(&Vector::zeros(d))?;
        Ok(Self { domain, beta, hessian, linear: Vector::zeros(d), x, tol: DEFAULT_TOL })
    }

    /// `β`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Hessian `(1 + βG²)I + βΣ g_s g_sᵀ` of the accumulated objective.
    pub fn hessian(&self) -> &SpdMatrix {
        &self.hessian
    }

    /// One round given `g = ∇f_t(x_t)`; returns `x_{t+1}`.
    pub fn step(&mut self, g: &Vector) -> Result<Vector> {
        check_gradient(g, self.domain.dim())?;
        self.hessian.rank_one_update_in_place(g, self.beta)?;
        self.linear += g - g * (self.beta * g.dot(&self.x));
        let b = &self.linear + g;
        let target = -self.hessian.solve(&b);
        self.x = project_mahalanobis(&self.domain, &self.hessian, &target, self.tol)?;
        Ok(self.x.clone())
    }
}

impl OnlineLearner for FtrlExpConcave {
    fn name(&self) -> &'static str {
        "ftrl_exp"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        self.step(&g)?;
        Ok(StepReport { grad: g, step: None, stability: None, meta: None })
    }
}

/// Step-size schedule of implicit-update OMD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ImplicitSchedule {
    /// `η_t = D/√(1 + 4G² + Σ_{s<t}‖∇f_s(x_s) − ∇f_{s−1}(x_s)‖²)`.
    Adaptive { diameter: f64, grad_bound: f64 },
    /// `η_t = η`.
    Fixed { eta: f64 },
}

/// Implicit-update OMD: a projected subgradient step for `x̂_{t+1}` followed
/// by a prox step on the full loss `f_t` for `x_{t+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitOmd {
    domain: Domain,
    schedule: ImplicitSchedule,
    xhat: Vector,
    x: Vector,
    prev_loss: Option<LossFn>,
    variation: f64,
    eta: f64,
    tol: f64,
}

impl ImplicitOmd {
    fn with_schedule(domain: Domain, schedule: ImplicitSchedule) -> Result<Self> {
        domain.validate()?;
        let x = domain.initial_point();
        let mut learner =
            Self { domain, schedule, xhat: x.clone(), x, prev_loss: None, variation: 0.0, eta: 0.0, tol: PROX_TOL };
        learner.eta = learner.step_size();
        if !(learner.eta > 0.0) || !learner.eta.is_finite() {
            return Err(Error::Config(format!("implicit OMD step size {} is invalid", learner.eta)));
        }
        Ok(learner)
    }

    /// Adaptive step for non-smooth convex losses.
    pub fn adaptive(domain: Domain, params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        Self::with_schedule(domain, ImplicitSchedule::Adaptive { diameter: params.d, grad_bound: params.g })
    }

    /// Constant step size `η`.
    pub fn fixed(domain: Domain, eta: f64) -> Result<Self> {
        Self::with_schedule(domain, ImplicitSchedule::Fixed { eta })
    }

    fn step_size(&self) -> f64 {
        match self.schedule {
            ImplicitSchedule::Adaptive { diameter, grad_bound } => {
                diameter / (1.0 + 4.0 * grad_bound * grad_bound + self.variation).sqrt()
            }
            ImplicitSchedule::Fixed { eta } => eta,
        }
    }

    /// Current `η_t`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `x̂_t`.
    pub fn xhat(&self) -> &Vector {
        &self.xhat
    }

    /// Accumulated `Σ_{s<t}‖∇f_s(x_s) − ∇f_{s−1}(x_s)‖²`.
    pub fn variation(&self) -> f64 {
        self.variation
    }
}

impl OnlineLearner for ImplicitOmd {
    fn name(&self) -> &'static str {
        match self.schedule {
            ImplicitSchedule::Adaptive { .. } => "implicit_omd",
            ImplicitSchedule::Fixed { .. } => "implicit_fixed",
        }
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let eta_t = self.eta;
        let xhat_next = self.domain.project(&(&self.xhat - &g * eta_t))?;
        let prev = match &self.prev_loss {
            Some(p) => p.grad(&self.x)?,
            None => Vector::zeros(self.domain.dim()),
        };
        self.variation += (&g - prev).norm_squared();
        self.eta = self.step_size();
        self.x = f.prox(&xhat_next, self.eta, &self.domain, self.tol)?;
        self.xhat = xhat_next;
        self.prev_loss = Some(f.clone());
        Ok(StepReport {
            grad: g,
            step: Some(StepCheck { eta: eta_t, rule: StepRule::NonIncreasing }),
            stability: None,
            meta: None,
        })
    }
}
