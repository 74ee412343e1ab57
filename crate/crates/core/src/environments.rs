//! Synthetic environments for the stochastically extended adversarial
//! protocol: each round nature fixes a distribution over loss functions,
//! the learner suffers a sampled `f_t`, and regret is measured against the
//! expected function `F_t`.
//!
//! For families with affine gradients the per-round stochastic variance
//! and adversarial variation are computed exactly; for the absolute loss
//! they are estimated on a probe set.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{minimize_quadratic, random_unit, Domain, Matrix, Vector};
use crate::losses::{ExpectedLoss, Kink, LossFn};

/// Random-stream purposes; each gets a disjoint region of the round's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Trial-level setup (permutations, drift paths) when used with round 0.
    Draw = 0,
    /// Per-round pool generation.
    Pool = 1,
    /// Monte Carlo samples for variance estimates.
    Estimate = 2,
    /// Random probe points.
    Probe = 3,
}

/// Counter-based stream: a pure function of `(seed, trial, round, purpose)`.
pub fn stream(seed: u64, trial: u64, round: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng.set_word_pos(((round as u128) << 34) | ((purpose as u128) << 30));
    rng
}

/// `f(x) = c`, encoded as an absolute loss with zero direction.
pub fn constant_loss(dim: usize, c: f64) -> LossFn {
    LossFn::absolute(Vector::zeros(dim), -c)
}

/// Second-moment structure of `∇f(x) − ∇F(x) = ΔA·x + Δb`:
/// `E‖ΔA·x + Δb‖² = xᵀQx + 2qᵀx + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub q: Matrix,
    pub lin: Vector,
    pub r: f64,
}

impl Moments {
    fn zero(dim: usize) -> Self {
        Self { q: Matrix::zeros(dim, dim), lin: Vector::zeros(dim), r: 0.0 }
    }

    fn scaled(mut self, c: f64) -> Self {
        self.q *= c;
        self.lin *= c;
        self.r *= c;
        self
    }

    /// `sup_{x∈X} xᵀQx + 2qᵀx + r`.
    pub fn sup(&self, domain: &Domain) -> Result<f64> {
        Ok(domain.sup_convex_quadratic(&self.q, &self.lin, self.r)?.max(0.0))
    }

    fn of_atoms(atoms: &[(f64, LossFn)], dim: usize) -> Option<Self> {
        let affine: Vec<(f64, Matrix, Vector)> =
            atoms.iter().map(|(p, f)| f.affine_gradient(dim).map(|(a, b)| (*p, a, b))).collect::<Option<_>>()?;
        let mut abar = Matrix::zeros(dim, dim);
        let mut bbar = Vector::zeros(dim);
        for (p, a, b) in &affine {
            abar += a * *p;
            bbar += b * *p;
        }
        let mut m = Self::zero(dim);
        for (p, a, b) in &affine {
            let da = a - &abar;
            let db = b - &bbar;
            m.q += (da.transpose() * &da) * *p;
            m.lin += (da.transpose() * &db) * *p;
            m.r += p * db.norm_squared();
        }
        Some(m)
    }
}

/// Distribution of a round function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossDistribution {
    /// Finitely many atoms with the given probabilities (uniform when omitted).
    Atoms {
        atoms: Vec<LossFn>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probs: Option<Vec<f64>>,
    },
    /// The location parameter of `center` perturbed by `radius` times a
    /// uniform unit vector: `g` for linear, `c` for quadratic losses, and
    /// `b ± radius` with equal probability for the scalar-offset families.
    SphereShift { center: LossFn, radius: f64 },
}

impl LossDistribution {
    /// Single deterministic loss.
    pub fn point(loss: LossFn) -> Self {
        LossDistribution::Atoms { atoms: vec![loss], probs: None }
    }

    fn weighted_atoms(&self) -> Option<Vec<(f64, LossFn)>> {
        match self {
            LossDistribution::Atoms { atoms, probs } => {
                let n = atoms.len() as f64;
                Some(
                    atoms
                        .iter()
                        .enumerate()
                        .map(|(i, a)| (probs.as_ref().map_or(1.0 / n, |p| p[i]), a.clone()))
                        .collect(),
                )
            }
            LossDistribution::SphereShift { .. } => None,
        }
    }

    /// Checks parameters against dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            LossDistribution::Atoms { atoms, probs } => {
                if atoms.is_empty() {
                    return Err(Error::Config("atom distribution needs at least one atom".into()));
                }
                for a in atoms {
                    a.validate(dim)?;
                }
                if let Some(p) = probs {
                    if p.len() != atoms.len() {
                        return Err(Error::Config("probs must have one entry per atom".into()));
                    }
                    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                        return Err(Error::Config("probs must be non-negative and sum to 1".into()));
                    }
                }
                Ok(())
            }
            LossDistribution::SphereShift { center, radius } => {
                center.validate(dim)?;
                if matches!(center, LossFn::Sum { .. }) {
                    return Err(Error::Config("sphere_shift needs a single-family centre".into()));
                }
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return Err(Error::Config(format!("sphere_shift radius must be >= 0, got {radius}")));
                }
                Ok(())
            }
        }
    }

    /// Draws one loss.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LossFn {
        match self {
            LossDistribution::Atoms { atoms, probs } => {
                let idx = match probs {
                    None => rng.gen_range(0..atoms.len()),
                    Some(p) => {
                        let u: f64 = rng.gen();
                        let mut acc = 0.0;
                        let mut chosen = p.len() - 1;
                        for (i, pi) in p.iter().enumerate() {
                            acc += pi;
                            if u < acc {
                                chosen = i;
                                break;
                            }
                        }
                        chosen
                    }
                };
                atoms[idx].clone()
            }
            LossDistribution::SphereShift { center, radius } => {
                let dim = center.dim().unwrap_or(1);
                match center {
                    LossFn::Linear { g } => LossFn::linear(g + random_unit(dim, rng) * *radius),
                    LossFn::ShiftedQuadratic { c, lam } => {
                        LossFn::shifted_quadratic(c + random_unit(dim, rng) * *radius, *lam)
                    }
                    LossFn::SquaredLinear { a, b } => LossFn::squared_linear(a.clone(), b + sign(rng) * radius),
                    LossFn::Absolute { a, b } => LossFn::absolute(a.clone(), b + sign(rng) * radius),
                    LossFn::Sum { .. } => center.clone(),
                }
            }
        }
    }

    /// The expected function.
    pub fn mean(&self) -> LossFn {
        match self {
            LossDistribution::Atoms { .. } => {
                let atoms = self.weighted_atoms().expect("atoms");
                if atoms.len() == 1 {
                    atoms[0].1.clone()
                } else {
                    LossFn::sum(atoms)
                }
            }
            LossDistribution::SphereShift { center, radius } => {
                if *radius == 0.0 {
                    return center.clone();
                }
                let dim = center.dim().unwrap_or(1);
                let r2 = radius * radius;
                match center {
                    LossFn::Linear { .. } | LossFn::Sum { .. } => center.clone(),
                    LossFn::ShiftedQuadratic { lam, .. } => {
                        LossFn::sum(vec![(1.0, center.clone()), (1.0, constant_loss(dim, 0.5 * lam * r2))])
                    }
                    LossFn::SquaredLinear { .. } => {
                        LossFn::sum(vec![(1.0, center.clone()), (1.0, constant_loss(dim, 0.5 * r2))])
                    }
                    LossFn::Absolute { a, b } => LossFn::sum(vec![
                        (0.5, LossFn::absolute(a.clone(), b + radius)),
                        (0.5, LossFn::absolute(a.clone(), b - radius)),
                    ]),
                }
            }
        }
    }

    /// Exact gradient-noise moments, when gradients are affine.
    pub fn moments(&self, dim: usize) -> Option<Moments> {
        match self {
            LossDistribution::Atoms { .. } => Moments::of_atoms(&self.weighted_atoms().expect("atoms"), dim),
            LossDistribution::SphereShift { center, radius } => {
                let r2 = radius * radius;
                let r = match center {
                    LossFn::Linear { .. } => r2,
                    LossFn::ShiftedQuadratic { lam, .. } => lam * lam * r2,
                    LossFn::SquaredLinear { a, .. } => a.norm_squared() * r2,
                    LossFn::Absolute { .. } | LossFn::Sum { .. } => return None,
                };
                Some(Moments { r, ..Moments::zero(dim) })
            }
        }
    }

    /// Every loss the distribution can produce lies in this finite
    /// "extreme" set or is a convex combination of its parameters.
    fn extreme_atoms(&self, dim: usize) -> Vec<(LossFn, f64)> {
        match self {
            LossDistribution::Atoms { atoms, .. } => atoms.iter().map(|a| (a.clone(), 0.0)).collect(),
            LossDistribution::SphereShift { center, radius } => {
                let _ = dim;
                vec![(center.clone(), *radius)]
            }
        }
    }
}

fn sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Analytic upper bound on `sup ‖∇f‖` over the domain for `loss` whose
/// location parameter may move by up to `slack`.
fn grad_bound_with_slack(loss: &LossFn, slack: f64, domain: &Domain) -> Result<f64> {
    Ok(match loss {
        LossFn::Linear { g } => g.norm() + slack,
        LossFn::ShiftedQuadratic { c, lam } => lam * (domain.farthest_distance(c) + slack),
        LossFn::SquaredLinear { a, b } => a.norm() * (scalar_range(a, *b, domain) + slack),
        LossFn::Absolute { a, .. } => a.norm(),
        LossFn::Sum { .. } => loss.grad_bound(domain)? + slack,
    })
}

/// `sup_X |⟨a, x⟩ − b|`.
fn scalar_range(a: &Vector, b: f64, domain: &Domain) -> f64 {
    let (hi, _) = domain.support(a);
    let (lo_neg, _) = domain.support(&(-a));
    (hi - b).abs().max((-lo_neg - b).abs())
}

/// Linear corruption `⟨γ_t, x⟩` added on `active_rounds` evenly spaced
/// rounds with `‖γ_t‖ = budget/active_rounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Total corruption `Σ_t ‖γ_t‖`.
    pub budget: f64,
    /// Number of corrupted rounds.
    pub active_rounds: usize,
    /// Direction of `γ_t` (normalized internally).
    pub direction: Vec<f64>,
    /// Flip the sign of consecutive corruptions.
    #[serde(default)]
    pub alternate: bool,
}

impl CorruptionSpec {
    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::Config("corruption budget must be >= 0".into()));
        }
        if self.active_rounds == 0 {
            return Err(Error::Config("corruption needs at least one active round".into()));
        }
        if self.direction.len() != dim || Vector::from_vec(self.direction.clone()).norm() == 0.0 {
            return Err(Error::Config("corruption direction must be a non-zero vector of the domain dimension".into()));
        }
        Ok(())
    }

    /// Per-round magnitude `‖γ_t‖` on active rounds.
    pub fn magnitude(&self) -> f64 {
        self.budget / self.active_rounds as f64
    }

    /// `γ_t` for round `t` of a horizon `horizon`, or `None` when inactive.
    pub fn gamma(&self, t: usize, horizon: usize) -> Option<Vector> {
        let stride = (horizon / self.active_rounds).max(1);
        if (t - 1) % stride != 0 {
            return None;
        }
        let k = (t - 1) / stride;
        if k >= self.active_rounds {
            return None;
        }
        let dir = Vector::from_vec(self.direction.clone());
        let s = if self.alternate && k % 2 == 1 { -1.0 } else { 1.0 };
        Some(dir.normalize() * (s * self.magnitude()))
    }
}

/// Where each round's pool of functions comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoolSource {
    /// The same pool every round.
    Fixed { pool: Vec<LossFn> },
    /// A fresh pool of `size` independent draws every round.
    Sampled { distribution: LossDistribution, size: usize },
}

/// The environment process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentKind {
    /// Deterministic schedule, cycled.
    Adversarial { schedule: Vec<LossFn> },
    /// The same distribution every round.
    IidStochastic { distribution: LossDistribution },
    /// I.i.d. draws plus a linear corruption schedule.
    CorruptedStochastic { distribution: LossDistribution, corruption: CorruptionSpec },
    /// A fixed multiset played in a random order without replacement.
    RandomOrder { multiset: Vec<LossFn> },
    /// The location of `center` follows a piecewise-constant path: every
    /// `segment_length` rounds it moves by a step chosen so that
    /// `sup_x ‖∇F_t − ∇F_{t−1}‖² = drift_sq`, staying within `region_radius`.
    SlowShift { center: LossFn, noise_radius: f64, drift_sq: f64, segment_length: usize, region_radius: f64 },
    /// Each round a pool of functions is available; the learner receives
    /// the average of `batch` of them drawn without replacement.
    LimitedResources { source: PoolSource, batch: usize },
}

/// Environment description: domain plus process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub domain: Domain,
    pub process: EnvironmentKind,
}

/// Analytic constants of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentInfo {
    /// Upper bound on `‖∇f_t(x)‖` over all rounds and feasible `x`.
    pub grad_bound: f64,
    /// Largest curvature of any round function, when gradients are affine.
    pub smoothness: Option<f64>,
    /// Exp-concavity modulus `1/(2·sup(⟨a,x⟩−b)²)` for squared-linear families.
    pub alpha: Option<f64>,
    /// Smallest strong-convexity modulus, when every function is a shifted quadratic.
    pub lambda: Option<f64>,
    /// True when every round function has an affine gradient.
    pub gradient_affine: bool,
}

/// The distribution of round `t`, optionally shifted by a linear corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLaw {
    pub kind: LawKind,
    pub shift: Option<Vector>,
}

/// Shape of a round distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    Distribution(LossDistribution),
    /// Average of `batch` draws without replacement from `pool`.
    Batch {
        pool: Vec<LossFn>,
        batch: usize,
    },
}

impl RoundLaw {
    fn with_shift(&self, f: LossFn) -> LossFn {
        match &self.shift {
            None => f,
            Some(g) => LossFn::sum(vec![(1.0, f), (1.0, LossFn::linear(g.clone()))]),
        }
    }

    /// Draws `f_t`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LossFn {
        let f = match &self.kind {
            LawKind::Distribution(d) => d.sample(rng),
            LawKind::Batch { pool, batch } => {
                let idx = sample_indices(rng, pool.len(), *batch);
                let w = 1.0 / *batch as f64;
                let mut chosen: Vec<usize> = idx.into_iter().collect();
                chosen.sort_unstable();
                LossFn::sum(chosen.into_iter().map(|i| (w, pool[i].clone())).collect())
            }
        };
        self.with_shift(f)
    }

    /// `F_t`.
    pub fn mean(&self) -> LossFn {
        let f = match &self.kind {
            LawKind::Distribution(d) => d.mean(),
            LawKind::Batch { pool, .. } => {
                let w = 1.0 / pool.len() as f64;
                LossFn::sum(pool.iter().map(|p| (w, p.clone())).collect())
            }
        };
        self.with_shift(f)
    }

    /// Exact noise moments when gradients are affine.
    pub fn moments(&self, dim: usize) -> Option<Moments> {
        match &self.kind {
            LawKind::Distribution(d) => d.moments(dim),
            LawKind::Batch { pool, batch } => {
                let k = pool.len();
                if k <= 1 {
                    return Some(Moments::zero(dim));
                }
                let w = 1.0 / k as f64;
                let atoms: Vec<(f64, LossFn)> = pool.iter().map(|p| (w, p.clone())).collect();
                let factor = (k - batch) as f64 / ((k - 1) as f64 * *batch as f64);
                Moments::of_atoms(&atoms, dim).map(|m| m.scaled(factor))
            }
        }
    }
}

/// One round of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSpec {
    pub t: usize,
    /// Sampled function `f_t`.
    pub f: LossFn,
    /// Expected function `F_t`.
    pub expected: ExpectedLoss,
    /// `σ_t² = sup_x E‖∇f_t(x) − ∇F_t(x)‖²` when gradients are affine.
    pub sigma_sq_exact: Option<f64>,
    /// `sup_x ‖∇F_t(x) − ∇F_{t−1}(x)‖²` (with `F_0 ≡ 0`) when gradients are affine.
    pub adv_var_exact: Option<f64>,
}

/// Comparators: the best fixed point of `Σ_t F_t` and the per-round minimizers of `F_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparators {
    pub fixed: Vector,
    pub dynamic: Vec<Vector>,
    /// `Σ_{t≥2} ‖u_t − u_{t−1}‖`.
    pub path_length: f64,
    /// True when a grid search was needed.
    pub estimated: bool,
}

/// A seeded instance of an environment for one trial.
#[derive(Debug, Clone)]
pub struct SeaEnvironment {
    spec: EnvironmentSpec,
    horizon: usize,
    seed: u64,
    trial: u64,
    permutation: Option<Vec<usize>>,
    locations: Option<Vec<Vector>>,
    prev_mean: Option<(usize, LossFn)>,
}

impl SeaEnvironment {
    /// Instantiates trial `trial` of `spec`.
    pub fn new(spec: &EnvironmentSpec, horizon: usize, seed: u64, trial: u64) -> Result<Self> {
        validate_spec(spec, horizon)?;
        let mut setup = stream(seed, trial, 0, StreamPurpose::Draw);
        let permutation = match &spec.process {
            EnvironmentKind::RandomOrder { multiset } => {
                let mut order: Vec<usize> = (0..multiset.len()).collect();
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut setup);
                Some(order)
            }
            _ => None,
        };
        let locations = match &spec.process {
            EnvironmentKind::SlowShift { center, drift_sq, segment_length, region_radius, .. } => {
                Some(drift_path(center, *drift_sq, *segment_length, *region_radius, horizon, &mut setup)?)
            }
            _ => None,
        };
        Ok(Self { spec: spec.clone(), horizon, seed, trial, permutation, locations, prev_mean: None })
    }

    /// The environment description.
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    /// The domain.
    pub fn domain(&self) -> &Domain {
        &self.spec.domain
    }

    /// Horizon `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Distribution of round `t`.
    pub fn law(&self, t: usize) -> Result<RoundLaw> {
        if t == 0 {
            return Err(Error::InvalidInput("rounds are numbered from 1".into()));
        }
        let dim = self.spec.domain.dim();
        Ok(match &self.spec.process {
            EnvironmentKind::Adversarial { schedule } => RoundLaw {
                kind: LawKind::Distribution(LossDistribution::point(schedule[(t - 1) % schedule.len()].clone())),
                shift: None,
            },
            EnvironmentKind::IidStochastic { distribution } => {
                RoundLaw { kind: LawKind::Distribution(distribution.clone()), shift: None }
            }
            EnvironmentKind::CorruptedStochastic { distribution, corruption } => {
                RoundLaw { kind: LawKind::Distribution(distribution.clone()), shift: corruption.gamma(t, self.horizon) }
            }
            EnvironmentKind::RandomOrder { multiset } => {
                let order = self.permutation.as_ref().expect("permutation");
                if t > multiset.len() {
                    return Err(Error::EndOfHorizon { round: t, horizon: multiset.len() });
                }
                let remaining: Vec<LossFn> = order[t - 1..].iter().map(|&i| multiset[i].clone()).collect();
                RoundLaw {
                    kind: LawKind::Distribution(LossDistribution::Atoms { atoms: remaining, probs: None }),
                    shift: None,
                }
            }
            EnvironmentKind::SlowShift { center, noise_radius, segment_length, .. } => {
                let path = self.locations.as_ref().expect("drift path");
                let loc = &path[((t - 1) / segment_length).min(path.len() - 1)];
                RoundLaw {
                    kind: LawKind::Distribution(LossDistribution::SphereShift {
                        center: shift_location(center, loc),
                        radius: *noise_radius,
                    }),
                    shift: None,
                }
            }
            EnvironmentKind::LimitedResources { source, batch } => {
                let pool = match source {
                    PoolSource::Fixed { pool } => pool.clone(),
                    PoolSource::Sampled { distribution, size } => {
                        let mut rng = stream(self.seed, self.trial, t as u64, StreamPurpose::Pool);
                        (0..*size).map(|_| distribution.sample(&mut rng)).collect()
                    }
                };
                let _ = dim;
                RoundLaw { kind: LawKind::Batch { pool, batch: *batch }, shift: None }
            }
        })
    }

    /// Generates round `t`: a deterministic function of `(seed, trial, t)`.
    pub fn next_round(&mut self, t: usize) -> Result<RoundSpec> {
        if t > self.horizon {
            return Err(Error::EndOfHorizon { round: t, horizon: self.horizon });
        }
        let law = self.law(t)?;
        let dim = self.spec.domain.dim();
        let f = match (&self.spec.process, &self.permutation) {
            (EnvironmentKind::RandomOrder { multiset }, Some(order)) => multiset[order[t - 1]].clone(),
            _ => law.sample(&mut stream(self.seed, self.trial, t as u64, StreamPurpose::Draw)),
        };
        let mean = law.mean();
        let sigma_sq_exact = match law.moments(dim) {
            Some(m) => Some(m.sup(&self.spec.domain)?),
            None => None,
        };
        let prev = match self.prev_mean.take() {
            Some((s, m)) if s + 1 == t => Some(m),
            _ if t == 1 => None,
            _ => Some(self.law(t - 1)?.mean()),
        };
        let adv_var_exact = adversarial_variation_exact(&mean, prev.as_ref(), &self.spec.domain)?;
        self.prev_mean = Some((t, mean.clone()));
        Ok(RoundSpec { t, f, expected: ExpectedLoss::exact(mean), sigma_sq_exact, adv_var_exact })
    }

    /// Lower-biased Monte Carlo estimate of `σ̃_t² = E sup_x ‖∇f_t(x) − ∇F_t(x)‖²`:
    /// `n_samples` draws, inner supremum over `n_probe_points` random feasible
    /// points plus the domain's extreme points and points next to every kink.
    pub fn sigma_tilde_sq_estimate(&self, t: usize, n_samples: usize, n_probe_points: usize) -> Result<f64> {
        if n_samples == 0 {
            return Err(Error::InvalidInput("sigma-tilde estimate needs at least one sample".into()));
        }
        let law = self.law(t)?;
        let mean = law.mean();
        let mut probe_rng = stream(self.seed, self.trial, t as u64, StreamPurpose::Probe);
        let mut draw_rng = stream(self.seed, self.trial, t as u64, StreamPurpose::Estimate);
        let samples: Vec<LossFn> = (0..n_samples).map(|_| law.sample(&mut draw_rng)).collect();
        let mut kink_sources: Vec<&LossFn> = samples.iter().collect();
        kink_sources.push(&mean);
        let probes = probe_points(&self.spec.domain, n_probe_points, &kink_sources, &mut probe_rng);
        let mean_grads = probes.iter().map(|x| mean.grad(x)).collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for f in &samples {
            let mut best = 0.0_f64;
            for (x, gm) in probes.iter().zip(&mean_grads) {
                best = best.max((f.grad(x)? - gm).norm_squared());
            }
            total += best;
        }
        Ok(total / n_samples as f64)
    }

    /// Probe-based estimate of `sup_x ‖∇F_t(x) − ∇F_{t−1}(x)‖²` (with `F_0 ≡ 0`).
    pub fn adv_var_estimate(&self, t: usize, n_probe_points: usize) -> Result<f64> {
        let current = self.law(t)?.mean();
        let previous = if t > 1 { Some(self.law(t - 1)?.mean()) } else { None };
        let mut rng = stream(self.seed, self.trial, t as u64, StreamPurpose::Probe);
        let mut sources = vec![&current];
        if let Some(p) = &previous {
            sources.push(p);
        }
        let probes = probe_points(&self.spec.domain, n_probe_points, &sources, &mut rng);
        let mut best = 0.0_f64;
        for x in &probes {
            let mut diff = current.grad(x)?;
            if let Some(p) = &previous {
                diff -= p.grad(x)?;
            }
            best = best.max(diff.norm_squared());
        }
        Ok(best)
    }

    /// Static and dynamic comparators over the horizon.
    pub fn comparators(&self) -> Result<Comparators> {
        let domain = &self.spec.domain;
        let dim = domain.dim();
        let mut total_a = Matrix::zeros(dim, dim);
        let mut total_b = Vector::zeros(dim);
        let mut total_kinks: Vec<Kink> = Vec::new();
        let mut dynamic: Vec<Vector> = Vec::with_capacity(self.horizon);
        let mut estimated = false;
        let mut last: Option<(LossFn, Vector)> = None;
        for t in 1..=self.horizon {
            let mean = self.law(t)?.mean();
            let (a, b, kinks) = mean.decompose(dim);
            total_a += &a;
            total_b += &b;
            for k in kinks {
                match total_kinks.iter_mut().find(|e| e.b == k.b && e.a == k.a) {
                    Some(e) => e.weight += k.weight,
                    None => total_kinks.push(k),
                }
            }
            let u = match &last {
                Some((prev, u)) if *prev == mean => u.clone(),
                _ => {
                    let (a, b, kinks) = mean.decompose(dim);
                    let (u, est) = minimize_expected(domain, &a, &b, &kinks, &mean)?;
                    estimated |= est;
                    u
                }
            };
            last = Some((mean, u.clone()));
            dynamic.push(u);
        }
        let scale = 1.0 / self.horizon as f64;
        for k in &mut total_kinks {
            k.weight *= scale;
        }
        let avg_a = total_a * scale;
        let avg_b = total_b * scale;
        let objective = |x: &Vector| -> f64 {
            0.5 * x.dot(&(&avg_a * x))
                + avg_b.dot(x)
                + total_kinks.iter().map(|k| k.weight * (k.a.dot(x) - k.b).abs()).sum::<f64>()
        };
        let (fixed, est) = minimize_expected_with(domain, &avg_a, &avg_b, &total_kinks, &objective)?;
        estimated |= est;
        let path_length = dynamic.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
        Ok(Comparators { fixed, dynamic, path_length, estimated })
    }

    /// Analytic constants of the environment.
    pub fn info(&self) -> Result<EnvironmentInfo> {
        environment_info(&self.spec, self.horizon)
    }
}

/// `sup_x ‖∇F_t(x) − ∇F_{t−1}(x)‖²` for affine gradients.
pub fn adversarial_variation_exact(
    current: &LossFn,
    previous: Option<&LossFn>,
    domain: &Domain,
) -> Result<Option<f64>> {
    let dim = domain.dim();
    let Some((a, b)) = current.affine_gradient(dim) else { return Ok(None) };
    let (da, db) = match previous {
        None => (a, b),
        Some(p) => match p.affine_gradient(dim) {
            None => return Ok(None),
            Some((pa, pb)) => (a - pa, b - pb),
        },
    };
    let m = Moments { q: da.transpose() * &da, lin: da.transpose() * &db, r: db.norm_squared() };
    Ok(Some(m.sup(domain)?))
}

fn shift_location(center: &LossFn, loc: &Vector) -> LossFn {
    match center {
        LossFn::Linear { g } => LossFn::linear(g + loc),
        LossFn::ShiftedQuadratic { c, lam } => LossFn::shifted_quadratic(c + loc, *lam),
        LossFn::SquaredLinear { a, b } => LossFn::squared_linear(a.clone(), b + loc[0]),
        LossFn::Absolute { a, b } => LossFn::absolute(a.clone(), b + loc[0]),
        LossFn::Sum { .. } => center.clone(),
    }
}

/// Dimension of the location parameter and the step length giving a
/// gradient change of exactly `√drift_sq`.
fn location_geometry(center: &LossFn, drift_sq: f64) -> Result<(usize, f64)> {
    let root = drift_sq.sqrt();
    match center {
        LossFn::Linear { g } => Ok((g.len(), root)),
        LossFn::ShiftedQuadratic { c, lam } if *lam > 0.0 => Ok((c.len(), root / lam)),
        LossFn::SquaredLinear { a, .. } | LossFn::Absolute { a, .. } if a.norm() > 0.0 => Ok((1, root / a.norm())),
        _ => Err(Error::Config(
            "slow_shift needs a linear, quadratic (lam > 0) or non-degenerate scalar-offset centre".into(),
        )),
    }
}

fn drift_path<R: Rng + ?Sized>(
    center: &LossFn,
    drift_sq: f64,
    segment_length: usize,
    region_radius: f64,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Vector>> {
    let (dim, step) = location_geometry(center, drift_sq)?;
    if step > region_radius {
        return Err(Error::Config(format!("slow_shift step {step} exceeds region_radius {region_radius}")));
    }
    let segments = horizon.div_ceil(segment_length);
    let mut loc = Vector::zeros(dim);
    let mut path = Vec::with_capacity(segments);
    path.push(loc.clone());
    for _ in 1..segments {
        let dir = random_unit(dim, rng);
        let candidate = &loc + &dir * step;
        loc = if candidate.norm() <= region_radius {
            candidate
        } else {
            let n = loc.norm();
            &loc - &loc * (step / n)
        };
        path.push(loc.clone());
    }
    Ok(path)
}

fn validate_spec(spec: &EnvironmentSpec, horizon: usize) -> Result<()> {
    spec.domain.validate()?;
    let dim = spec.domain.dim();
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    match &spec.process {
        EnvironmentKind::Adversarial { schedule } => {
            if schedule.is_empty() {
                return Err(Error::Config("adversarial schedule is empty".into()));
            }
            for f in schedule {
                f.validate(dim)?;
            }
        }
        EnvironmentKind::IidStochastic { distribution } => distribution.validate(dim)?,
        EnvironmentKind::CorruptedStochastic { distribution, corruption } => {
            distribution.validate(dim)?;
            corruption.validate(dim)?;
        }
        EnvironmentKind::RandomOrder { multiset } => {
            if multiset.len() < horizon {
                return Err(Error::Config(format!(
                    "random_order multiset has {} functions but the horizon is {horizon}",
                    multiset.len()
                )));
            }
            for f in multiset {
                f.validate(dim)?;
            }
        }
        EnvironmentKind::SlowShift { center, noise_radius, drift_sq, segment_length, region_radius } => {
            center.validate(dim)?;
            if !(*noise_radius >= 0.0) || !(*drift_sq >= 0.0) || !(*region_radius > 0.0) || *segment_length == 0 {
                return Err(Error::Config(
                    "slow_shift needs noise_radius >= 0, drift_sq >= 0, region_radius > 0 and segment_length >= 1"
                        .into(),
                ));
            }
            location_geometry(center, *drift_sq)?;
        }
        EnvironmentKind::LimitedResources { source, batch } => {
            let size = match source {
                PoolSource::Fixed { pool } => {
                    for f in pool {
                        f.validate(dim)?;
                    }
                    pool.len()
                }
                PoolSource::Sampled { distribution, size } => {
                    distribution.validate(dim)?;
                    *size
                }
            };
            if size == 0 || *batch == 0 || *batch > size {
                return Err(Error::Config(format!(
                    "limited_resources needs 1 <= batch <= pool size (batch {batch}, pool {size})"
                )));
            }
        }
    }
    Ok(())
}

/// Every function (with its location slack) that the process can emit.
fn reachable_losses(spec: &EnvironmentSpec) -> Vec<(LossFn, f64)> {
    let dim = spec.domain.dim();
    match &spec.process {
        EnvironmentKind::Adversarial { schedule } => schedule.iter().map(|f| (f.clone(), 0.0)).collect(),
        EnvironmentKind::IidStochastic { distribution } | EnvironmentKind::CorruptedStochastic { distribution, .. } => {
            distribution.extreme_atoms(dim)
        }
        EnvironmentKind::RandomOrder { multiset } => multiset.iter().map(|f| (f.clone(), 0.0)).collect(),
        EnvironmentKind::SlowShift { center, noise_radius, region_radius, .. } => {
            vec![(center.clone(), noise_radius + region_radius)]
        }
        EnvironmentKind::LimitedResources { source, .. } => match source {
            PoolSource::Fixed { pool } => pool.iter().map(|f| (f.clone(), 0.0)).collect(),
            PoolSource::Sampled { distribution, .. } => distribution.extreme_atoms(dim),
        },
    }
}

fn environment_info(spec: &EnvironmentSpec, horizon: usize) -> Result<EnvironmentInfo> {
    validate_spec(spec, horizon)?;
    let domain = &spec.domain;
    let dim = domain.dim();
    let reachable = reachable_losses(spec);
    let mut grad_bound = 0.0_f64;
    let mut smoothness = Some(0.0_f64);
    let mut alpha: Option<f64> = None;
    let mut all_squared_linear = true;
    let mut lambda: Option<f64> = None;
    let mut all_quadratic = true;
    for (f, slack) in &reachable {
        grad_bound = grad_bound.max(grad_bound_with_slack(f, *slack, domain)?);
        smoothness = match (smoothness, f.smoothness(dim)) {
            (Some(s), Some(l)) => Some(s.max(l)),
            _ => None,
        };
        match f {
            LossFn::SquaredLinear { a, b } => {
                let range = scalar_range(a, *b, domain) + slack;
                let candidate = if range > 0.0 { 1.0 / (2.0 * range * range) } else { f64::INFINITY };
                alpha = Some(alpha.map_or(candidate, |v: f64| v.min(candidate)));
            }
            _ => all_squared_linear = false,
        }
        match f {
            LossFn::ShiftedQuadratic { lam, .. } => lambda = Some(lambda.map_or(*lam, |v: f64| v.min(*lam))),
            _ => all_quadratic = false,
        }
    }
    if let EnvironmentKind::CorruptedStochastic { corruption, .. } = &spec.process {
        grad_bound += corruption.magnitude();
    }
    Ok(EnvironmentInfo {
        grad_bound,
        smoothness,
        alpha: if all_squared_linear { alpha } else { None },
        lambda: if all_quadratic { lambda } else { None },
        gradient_affine: reachable.iter().all(|(f, _)| f.is_smooth()),
    })
}

/// Probe points: random feasible points, the domain's extreme points, and
/// for every kink direction points just beside each kink and midway
/// between consecutive kinks.
fn probe_points<R: Rng + ?Sized>(domain: &Domain, n_random: usize, sources: &[&LossFn], rng: &mut R) -> Vec<Vector> {
    let dim = domain.dim();
    let mut points: Vec<Vector> = (0..n_random).map(|_| domain.sample_point(rng)).collect();
    points.extend(domain.extreme_points());
    let mut groups: Vec<(Vector, Vec<f64>)> = Vec::new();
    for f in sources {
        let (_, _, kinks) = f.decompose(dim);
        for k in kinks {
            let n = k.a.norm();
            let mut u = &k.a / n;
            let mut z = k.b / n;
            let lead = u.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
            if lead < 0.0 {
                u = -u;
                z = -z;
            }
            match groups.iter_mut().find(|(dir, _)| (dir - &u).amax() <= 1e-12) {
                Some((_, zs)) => zs.push(z),
                None => groups.push((u, vec![z])),
            }
        }
    }
    for (u, mut zs) in groups {
        zs.sort_by(f64::total_cmp);
        zs.dedup();
        let (zmax, xmax) = domain.support(&u);
        let (neg, xmin) = domain.support(&(-&u));
        let zmin = -neg;
        if zmax - zmin <= 1e-15 {
            continue;
        }
        let lift = |z: f64| -> Vector {
            let theta = ((z - zmin) / (zmax - zmin)).clamp(0.0, 1.0);
            &xmin + (&xmax - &xmin) * theta
        };
        let h = 1e-9 * (zmax - zmin);
        let mut targets = vec![zmin, zmax];
        for w in zs.windows(2) {
            targets.push(0.5 * (w[0] + w[1]));
        }
        for z in &zs {
            targets.extend([z - h, z + h]);
        }
        points.extend(targets.into_iter().filter(|z| *z >= zmin && *z <= zmax).map(lift));
    }
    points
}

/// Minimizes an expected function given as affine-gradient part plus kinks.
/// Returns the minimizer and whether a grid search was needed.
pub fn minimize_expected(
    domain: &Domain,
    a: &Matrix,
    b: &Vector,
    kinks: &[Kink],
    f: &LossFn,
) -> Result<(Vector, bool)> {
    let objective = |x: &Vector| f.eval(x).unwrap_or(f64::INFINITY);
    minimize_expected_with(domain, a, b, kinks, &objective)
}

fn minimize_expected_with(
    domain: &Domain,
    a: &Matrix,
    b: &Vector,
    kinks: &[Kink],
    objective: &dyn Fn(&Vector) -> f64,
) -> Result<(Vector, bool)> {
    if kinks.is_empty() {
        return Ok((minimize_quadratic(domain, a, b, 1e-12)?.x, false));
    }
    let smooth_free = a.amax() == 0.0 && b.amax() == 0.0;
    if smooth_free {
        if let Some(x) = collinear_median(domain, kinks) {
            return Ok((x, false));
        }
    }
    grid_minimize(domain, objective).map(|x| (x, true))
}

/// Exact minimizer of `Σ w_k|⟨a_k, x⟩ − b_k|` when all `a_k` are parallel:
/// a weighted median along the common direction, lifted to the domain.
fn collinear_median(domain: &Domain, kinks: &[Kink]) -> Option<Vector> {
    let u = kinks[0].a.normalize();
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(kinks.len());
    for k in kinks {
        let n = k.a.norm();
        let cos = k.a.dot(&u) / n;
        if (cos.abs() - 1.0).abs() > 1e-12 {
            return None;
        }
        points.push((k.b / (n * cos), k.weight * n));
    }
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = points.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut median = points[points.len() - 1].0;
    for (z, w) in &points {
        acc += w;
        if acc >= 0.5 * total {
            median = *z;
            break;
        }
    }
    let (zmax, xmax) = domain.support(&u);
    let (neg, xmin) = domain.support(&(-&u));
    let zmin = -neg;
    let z = median.clamp(zmin, zmax);
    if zmax - zmin <= 1e-15 {
        return Some(xmin);
    }
    let theta = (z - zmin) / (zmax - zmin);
    Some(&xmin + (&xmax - &xmin) * theta)
}

/// Zooming grid search for low-dimensional non-smooth objectives.
fn grid_minimize(domain: &Domain, objective: &dyn Fn(&Vector) -> f64) -> Result<Vector> {
    let dim = domain.dim();
    if dim > 2 {
        return Err(Error::InvalidInput(
            "comparator for non-smooth expected losses needs parallel kinks or dimension <= 2".into(),
        ));
    }
    let r = domain.max_norm();
    let mut centre = Vector::zeros(dim);
    let mut half_width = r;
    let mut best = domain.initial_point();
    let mut best_value = objective(&best);
    let per_axis = 41usize;
    for _ in 0..40 {
        let axis: Vec<f64> =
            (0..per_axis).map(|i| -half_width + 2.0 * half_width * i as f64 / (per_axis - 1) as f64).collect();
        let mut visit = |x: Vector| {
            let p = domain.project(&x).expect("finite grid point");
            let v = objective(&p);
            if v < best_value {
                best_value = v;
                best = p;
            }
        };
        if dim == 1 {
            for s in &axis {
                visit(Vector::from_vec(vec![centre[0] + s]));
            }
        } else {
            for s in &axis {
                for q in &axis {
                    visit(Vector::from_vec(vec![centre[0] + s, centre[1] + q]));
                }
            }
        }
        centre = best.clone();
        half_width *= 0.25;
        if half_width < 1e-13 {
            break;
        }
    }
    Ok(best)
}
