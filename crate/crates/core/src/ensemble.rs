//! Two-layer dynamic-regret learners: a pool of base learners with
//! geometrically spaced step sizes combined by optimistic Hedge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, ProblemParams, Vector};
use crate::losses::LossFn;
use crate::static_learners::{ImplicitOmd, MetaReport, OnlineLearner, OptimisticOmd, StepCheck, StepReport, StepRule};

/// Which step-size pool formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// `η_i = min{1/(8L), √(D²/(8G²T))·2^{(i−1)/2}}`, `N = ⌈½log₂(G²T/(8L²D²))⌉ + 1`.
    Smooth,
    /// `η_i = (D/√(1+4TG²))·2^{i−1}`, `N = ⌈½ln((1+2T)(1+4TG²))⌉ + 1`.
    Nonsmooth,
    /// `η_i = min{1/(4L), 2^{i−1}√(D²/(98G²T))}`, `N = ⌈½log₂(8G²T/(L²D²))⌉ + 1`.
    AltOptimism,
}

/// Step sizes of the base learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizePool {
    pub etas: Vec<f64>,
    pub kind: PoolKind,
    /// True when the formula gave fewer than one learner and `N` was raised to 1.
    pub clamped: bool,
}

impl StepSizePool {
    /// Number of base learners `N`.
    pub fn len(&self) -> usize {
        self.etas.len()
    }

    /// Always false: a pool holds at least one step size.
    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }
}

/// Builds the step-size pool for horizon `horizon`.
pub fn build_pool(params: &ProblemParams, horizon: usize, kind: PoolKind) -> Result<StepSizePool> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let t = horizon as f64;
    let (g, d) = (params.g, params.d);
    let raw_count = match kind {
        PoolKind::Smooth => {
            let l = params.smoothness("the smooth step-size pool")?;
            (0.5 * (g * g * t / (8.0 * l * l * d * d)).log2()).ceil() + 1.0
        }
        PoolKind::Nonsmooth => (0.5 * ((1.0 + 2.0 * t) * (1.0 + 4.0 * t * g * g)).ln()).ceil() + 1.0,
        PoolKind::AltOptimism => {
            let l = params.smoothness("the alternative-optimism step-size pool")?;
            (0.5 * (8.0 * g * g * t / (l * l * d * d)).log2()).ceil() + 1.0
        }
    };
    let clamped = raw_count < 1.0;
    let n = if clamped { 1 } else { raw_count as usize };
    let etas = (1..=n)
        .map(|i| {
            let k = (i - 1) as f64;
            match kind {
                PoolKind::Smooth => {
                    let l = params.l.expect("checked above");
                    (1.0 / (8.0 * l)).min((d * d / (8.0 * g * g * t)).sqrt() * 2f64.powf(k / 2.0))
                }
                PoolKind::Nonsmooth => d / (1.0 + 4.0 * t * g * g).sqrt() * 2f64.powf(k),
                PoolKind::AltOptimism => {
                    let l = params.l.expect("checked above");
                    (1.0 / (4.0 * l)).min(2f64.powf(k) * (d * d / (98.0 * g * g * t)).sqrt())
                }
            }
        })
        .collect();
    Ok(StepSizePool { etas, kind, clamped })
}

/// Exponential weights `p_i ∝ exp(−ε(L_i + m_i))` computed in the log domain.
pub fn hedge_weights(cumulative: &[f64], optimism: &[f64], rate: f64) -> Vec<f64> {
    let logits: Vec<f64> = cumulative.iter().zip(optimism).map(|(l, m)| -rate * (l + m)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnormalized: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = unnormalized.iter().sum();
    unnormalized.iter().map(|u| u / total).collect()
}

fn combine(weights: &[f64], points: &[Vector]) -> Vector {
    let mut x = Vector::zeros(points[0].len());
    for (p, xi) in weights.iter().zip(points) {
        x += xi * *p;
    }
    x
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Smooth ensemble: base learners run optimistic OMD on the linearized loss
/// at the combined decision; the meta-learner adds correction terms
/// `λ‖x_{t,i} − x_{t−1,i}‖²` to both feedback and optimism.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothEnsemble {
    pool: StepSizePool,
    bases: Vec<OptimisticOmd>,
    prev_base: Vec<Vector>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    optimism: Vec<f64>,
    correction: f64,
    rate_cap: f64,
    log_n: f64,
    diameter: f64,
    vbar: f64,
    prev_grad: Vector,
    round: usize,
    x: Vector,
}

impl SmoothEnsemble {
    /// Pool and learning rate for horizon `horizon`, correction `λ = 2L`.
    pub fn new(domain: Domain, params: &ProblemParams, horizon: usize) -> Result<Self> {
        let pool = build_pool(params, horizon, PoolKind::Smooth)?;
        Self::with_pool(domain, params, pool)
    }

    /// Uses an explicit pool.
    pub fn with_pool(domain: Domain, params: &ProblemParams, pool: StepSizePool) -> Result<Self> {
        params.validate()?;
        let l = params.smoothness("the smooth ensemble")?;
        if pool.is_empty() {
            return Err(Error::InvalidInput("step-size pool is empty".into()));
        }
        let bases =
            pool.etas.iter().map(|&eta| OptimisticOmd::fixed(domain.clone(), eta)).collect::<Result<Vec<_>>>()?;
        let n = bases.len();
        let d = domain.dim();
        let starts: Vec<Vector> = bases.iter().map(|b| b.decision().clone()).collect();
        let weights = uniform(n);
        let x = combine(&weights, &starts);
        Ok(Self {
            pool,
            bases,
            prev_base: vec![Vector::zeros(d); n],
            weights,
            cumulative: vec![0.0; n],
            optimism: vec![0.0; n],
            correction: 2.0 * l,
            rate_cap: 1.0 / (8.0 * params.d * params.d * l),
            log_n: (n as f64).ln(),
            diameter: params.d,
            vbar: 0.0,
            prev_grad: Vector::zeros(d),
            round: 1,
            x,
        })
    }

    /// Overrides the correction coefficient `λ`.
    pub fn with_correction(mut self, correction: f64) -> Self {
        self.correction = correction;
        self
    }

    /// The step-size pool.
    pub fn pool(&self) -> &StepSizePool {
        &self.pool
    }

    /// Current weights `p_t`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `ε = min{1/(8D²L), √(ln N/(D²V̄))}`, the cap when `V̄ = 0`.
    fn rate(&self) -> f64 {
        if self.vbar <= 0.0 {
            self.rate_cap
        } else {
            self.rate_cap.min((self.log_n / (self.diameter * self.diameter * self.vbar)).sqrt())
        }
    }
}

impl OnlineLearner for SmoothEnsemble {
    fn name(&self) -> &'static str {
        "alg_smooth"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let lam = self.correction;
        let current: Vec<Vector> = self.bases.iter().map(|b| b.decision().clone()).collect();
        let feedback: Vec<f64> = current
            .iter()
            .zip(&self.prev_base)
            .map(|(xi, prev)| {
                let correction = if self.round >= 2 { lam * (xi - prev).norm_squared() } else { 0.0 };
                g.dot(xi) + correction
            })
            .collect();
        let mut base_stability = Vec::with_capacity(self.bases.len());
        let mut next = Vec::with_capacity(self.bases.len());
        for base in &mut self.bases {
            let report = base.observe(&LossFn::linear(g.clone()))?;
            base_stability.push(report.stability.expect("OMD reports stability"));
            next.push(base.decision().clone());
        }
        if self.round >= 2 {
            self.vbar += (&g - &self.prev_grad).norm_squared();
        }
        let rate = self.rate();
        for (c, l) in self.cumulative.iter_mut().zip(&feedback) {
            *c += l;
        }
        let next_optimism: Vec<f64> =
            next.iter().zip(&current).map(|(xn, xc)| g.dot(xn) + lam * (xn - xc).norm_squared()).collect();
        self.weights = hedge_weights(&self.cumulative, &next_optimism, rate);
        self.x = combine(&self.weights, &next);
        let optimism = std::mem::replace(&mut self.optimism, next_optimism);
        self.prev_base = current.clone();
        self.prev_grad = g.clone();
        self.round += 1;
        Ok(StepReport {
            grad: g,
            step: Some(StepCheck { eta: rate, rule: StepRule::NonIncreasing }),
            stability: None,
            meta: Some(MetaReport {
                weights: self.weights.clone(),
                rate,
                feedback,
                optimism,
                base_decisions: current,
                next_base_decisions: next,
                base_stability,
            }),
        })
    }
}

/// Non-smooth ensemble: implicit-update base learners and a meta-learner
/// on function values with a function-variation learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NonsmoothEnsemble {
    pool: StepSizePool,
    bases: Vec<ImplicitOmd>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    optimism: Vec<f64>,
    variation: f64,
    reference: Vector,
    prev_loss: Option<LossFn>,
    x: Vector,
}

impl NonsmoothEnsemble {
    pub fn new(domain: Domain, params: &ProblemParams, horizon: usize) -> Result<Self> {
        let pool = build_pool(params, horizon, PoolKind::Nonsmooth)?;
        Self::with_pool(domain, pool)
    }

    /// Uses an explicit pool.
    pub fn with_pool(domain: Domain, pool: StepSizePool) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InvalidInput("step-size pool is empty".into()));
        }
        let bases = pool.etas.iter().map(|&eta| ImplicitOmd::fixed(domain.clone(), eta)).collect::<Result<Vec<_>>>()?;
        let n = bases.len();
        let starts: Vec<Vector> = bases.iter().map(|b| b.decision().clone()).collect();
        let weights = uniform(n);
        let x = combine(&weights, &starts);
        Ok(Self {
            pool,
            bases,
            weights,
            cumulative: vec![0.0; n],
            optimism: vec![0.0; n],
            variation: 0.0,
            reference: domain.initial_point(),
            prev_loss: None,
            x,
        })
    }

    /// The step-size pool.
    pub fn pool(&self) -> &StepSizePool {
        &self.pool
    }

    /// Current weights `p_t`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl OnlineLearner for NonsmoothEnsemble {
    fn name(&self) -> &'static str {
        "alg_nonsmooth"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let current: Vec<Vector> = self.bases.iter().map(|b| b.decision().clone()).collect();
        let feedback = current.iter().map(|xi| f.eval(xi)).collect::<Result<Vec<f64>>>()?;
        let f_ref = f.eval(&self.reference)?;
        let mut largest = 0.0_f64;
        for (xi, fi) in current.iter().zip(&feedback) {
            let previous = match &self.prev_loss {
                Some(p) => p.eval(xi)? - p.eval(&self.reference)?,
                None => 0.0,
            };
            largest = largest.max((fi - f_ref - previous).abs());
        }
        self.variation += largest * largest;
        let rate = 1.0 / (1.0 + self.variation).sqrt();
        let mut next = Vec::with_capacity(self.bases.len());
        for base in &mut self.bases {
            base.observe(f)?;
            next.push(base.decision().clone());
        }
        for (c, l) in self.cumulative.iter_mut().zip(&feedback) {
            *c += l;
        }
        let next_optimism = next.iter().map(|xn| f.eval(xn)).collect::<Result<Vec<f64>>>()?;
        self.weights = hedge_weights(&self.cumulative, &next_optimism, rate);
        self.x = combine(&self.weights, &next);
        let optimism = std::mem::replace(&mut self.optimism, next_optimism);
        self.prev_loss = Some(f.clone());
        Ok(StepReport {
            grad: g,
            step: Some(StepCheck { eta: rate, rule: StepRule::NonIncreasing }),
            stability: None,
            meta: Some(MetaReport {
                weights: self.weights.clone(),
                rate,
                feedback,
                optimism,
                base_decisions: current,
                next_base_decisions: next,
                base_stability: Vec::new(),
            }),
        })
    }
}

/// Ensemble variant whose optimism is the gradient at the provisional
/// combination `x̄_{t+1} = Σ p_{t,i}x_{t+1,i}`, with base learners using
/// their own gradients and no correction terms.
#[derive(Debug, Clone, PartialEq)]
pub struct AltOptimismEnsemble {
    pool: StepSizePool,
    bases: Vec<OptimisticOmd>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    optimism: Vec<f64>,
    offset: f64,
    variation: f64,
    prev_optimism_grad: Vector,
    x: Vector,
}

impl AltOptimismEnsemble {
    pub fn new(domain: Domain, params: &ProblemParams, horizon: usize) -> Result<Self> {
        let pool = build_pool(params, horizon, PoolKind::AltOptimism)?;
        Self::with_pool(domain, params, pool)
    }

    /// Uses an explicit pool; `δ = 4D²L²(ln N + 2D²)`.
    pub fn with_pool(domain: Domain, params: &ProblemParams, pool: StepSizePool) -> Result<Self> {
        params.validate()?;
        let l = params.smoothness("the alternative-optimism ensemble")?;
        if pool.is_empty() {
            return Err(Error::InvalidInput("step-size pool is empty".into()));
        }
        let bases =
            pool.etas.iter().map(|&eta| OptimisticOmd::fixed(domain.clone(), eta)).collect::<Result<Vec<_>>>()?;
        let n = bases.len();
        let d2 = params.d * params.d;
        let delta = 4.0 * d2 * l * l * ((n as f64).ln() + 2.0 * d2);
        let starts: Vec<Vector> = bases.iter().map(|b| b.decision().clone()).collect();
        let weights = uniform(n);
        let x = combine(&weights, &starts);
        Ok(Self {
            pool,
            bases,
            weights,
            cumulative: vec![0.0; n],
            optimism: vec![0.0; n],
            offset: delta + 4.0 * params.g * params.g,
            variation: 0.0,
            prev_optimism_grad: Vector::zeros(domain.dim()),
            x,
        })
    }

    /// The step-size pool.
    pub fn pool(&self) -> &StepSizePool {
        &self.pool
    }

    /// Current weights `p_t`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl OnlineLearner for AltOptimismEnsemble {
    fn name(&self) -> &'static str {
        "alg_alt_optimism"
    }

    fn decision(&self) -> &Vector {
        &self.x
    }

    fn observe(&mut self, f: &LossFn) -> Result<StepReport> {
        let g = f.grad(&self.x)?;
        let rate = 1.0 / (self.offset + self.variation).sqrt();
        self.variation += (&g - &self.prev_optimism_grad).norm_squared();
        let current: Vec<Vector> = self.bases.iter().map(|b| b.decision().clone()).collect();
        let feedback: Vec<f64> = current.iter().map(|xi| g.dot(xi)).collect();
        let mut base_stability = Vec::with_capacity(self.bases.len());
        let mut next = Vec::with_capacity(self.bases.len());
        for base in &mut self.bases {
            let report = base.observe(f)?;
            base_stability.push(report.stability.expect("OMD reports stability"));
            next.push(base.decision().clone());
        }
        let provisional = combine(&self.weights, &next);
        let optimism_grad = f.grad(&provisional)?;
        for (c, l) in self.cumulative.iter_mut().zip(&feedback) {
            *c += l;
        }
        let next_optimism: Vec<f64> = next.iter().map(|xn| optimism_grad.dot(xn)).collect();
        self.weights = hedge_weights(&self.cumulative, &next_optimism, rate);
        self.x = combine(&self.weights, &next);
        let optimism = std::mem::replace(&mut self.optimism, next_optimism);
        self.prev_optimism_grad = optimism_grad;
        Ok(StepReport {
            grad: g,
            step: Some(StepCheck { eta: rate, rule: StepRule::NonIncreasing }),
            stability: None,
            meta: Some(MetaReport {
                weights: self.weights.clone(),
                rate,
                feedback,
                optimism,
                base_decisions: current,
                next_base_decisions: next,
                base_stability,
            }),
        })
    }
}
