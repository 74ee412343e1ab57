//! Vectors, symmetric positive-definite matrices, feasible domains and the
//! projection oracles shared by every learner.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real vector used for decisions, gradients and optimism vectors.
pub type Vector = DVector<f64>;

/// Dense real matrix.
pub type Matrix = DMatrix<f64>;

/// Default tolerance of the iterative quadratic solver.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap of the iterative quadratic solver.
pub const QUADRATIC_ITERATION_CAP: usize = 10_000;

/// Number of rank-one updates after which the stored inverse is recomputed.
pub const INVERSE_REFRESH_PERIOD: usize = 512;

/// Smallest admissible Sherman–Morrison denominator.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-14;

/// Builds a vector from a slice.
pub fn vector(entries: &[f64]) -> Vector {
    DVector::from_column_slice(entries)
}

/// Rejects vectors with NaN or infinite entries.
pub fn ensure_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Rejects a vector whose length differs from `expected`.
pub fn ensure_dim(v: &Vector, expected: usize) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found: v.len() })
    }
}

/// Symmetric positive-definite matrix stored together with its inverse.
///
/// The inverse is maintained by Sherman–Morrison rank-one updates and
/// recomputed from a Cholesky factorization every
/// [`INVERSE_REFRESH_PERIOD`] updates to bound floating-point drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix {
    matrix: Matrix,
    inverse: Matrix,
    updates_since_refresh: usize,
}

impl SpdMatrix {
    /// `c·I` in dimension `dim`.
    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        if dim == 0 || !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scaled identity needs dim >= 1 and c > 0 (dim {dim}, c {c})")));
        }
        Ok(Self {
            matrix: Matrix::identity(dim, dim) * c,
            inverse: Matrix::identity(dim, dim) / c,
            updates_since_refresh: 0,
        })
    }

    /// Identity matrix in dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0).expect("identity is positive definite")
    }

    /// Validates symmetry and positive definiteness and computes the inverse.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput("SPD matrix must be square and non-empty".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("SPD matrix has non-finite entries".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 * matrix.amax().max(1.0) {
            return Err(Error::InvalidInput(format!("matrix is not symmetric (gap {asym:e})")));
        }
        let inverse = invert_spd(&matrix)?;
        Ok(Self { matrix, inverse, updates_since_refresh: 0 })
    }

    /// Dimension `d` of the `d×d` matrix.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The matrix `H`.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// The stored inverse `H⁻¹`.
    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    /// `‖H·H⁻¹ − I‖_∞` (largest absolute entry).
    pub fn inverse_residual(&self) -> f64 {
        let d = self.dim();
        (&self.matrix * &self.inverse - Matrix::identity(d, d)).amax()
    }

    /// `xᵀHx`.
    pub fn quad(&self, x: &Vector) -> f64 {
        x.dot(&(&self.matrix * x))
    }

    /// `xᵀH⁻¹x`.
    pub fn inv_quad(&self, x: &Vector) -> f64 {
        x.dot(&(&self.inverse * x))
    }

    /// `H⁻¹x`.
    pub fn solve(&self, x: &Vector) -> Vector {
        &self.inverse * x
    }

    /// Smallest and largest eigenvalue of `H`.
    pub fn eigen_range(&self) -> (f64, f64) {
        eigen_range(&self.matrix)
    }

    /// Returns `H + s·ggᵀ` with its inverse maintained incrementally.
    pub fn rank_one_update(&self, g: &Vector, s: f64) -> Result<Self> {
        let mut next = self.clone();
        next.rank_one_update_in_place(g, s)?;
        Ok(next)
    }

    /// In-place form of [`SpdMatrix::rank_one_update`].
    pub fn rank_one_update_in_place(&mut self, g: &Vector, s: f64) -> Result<()> {
        ensure_dim(g, self.dim())?;
        ensure_finite(g, "rank-one update vector")?;
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidInput(format!("rank-one scale must be >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(());
        }
        let hinv_g = &self.inverse * g;
        let denominator = 1.0 + s * g.dot(&hinv_g);
        if denominator <= DEGENERATE_DENOMINATOR || !denominator.is_finite() {
            return Err(Error::DegenerateUpdate { denominator });
        }
        self.matrix += (g * g.transpose()) * s;
        self.inverse -= (&hinv_g * hinv_g.transpose()) * (s / denominator);
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= INVERSE_REFRESH_PERIOD {
            self.inverse = invert_spd(&self.matrix)?;
            self.updates_since_refresh = 0;
        }
        Ok(())
    }
}

/// Sherman–Morrison update `H ↦ H + s·ggᵀ` returning a new matrix.
pub fn rank_one_inverse_update(h: &SpdMatrix, g: &Vector, s: f64) -> Result<SpdMatrix> {
    h.rank_one_update(g, s)
}

fn invert_spd(matrix: &Matrix) -> Result<Matrix> {
    let chol =
        matrix.clone().cholesky().ok_or_else(|| Error::InvalidInput("matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(matrix: &Matrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(matrix.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Convex feasible set. Ball and Box contain the origin; Simplex is the
/// probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    /// `{x : ‖x‖₂ ≤ radius}` in dimension `dim`.
    Ball { dim: usize, radius: f64 },
    /// `{x : lo ≤ x ≤ hi}` coordinate-wise.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x ≥ 0 : Σx = 1}` in dimension `dim`.
    Simplex { dim: usize },
}

impl Domain {
    /// Ball of the given radius centred at the origin.
    pub fn ball(dim: usize, radius: f64) -> Self {
        Domain::Ball { dim, radius }
    }

    /// Axis-aligned box.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Domain::Box { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    /// Probability simplex.
    pub fn simplex(dim: usize) -> Self {
        Domain::Simplex { dim }
    }

    /// Checks the domain descriptor for consistency.
    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Ball { dim, radius } => {
                if *dim == 0 || !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Config(format!(
                        "ball needs dim >= 1 and a positive radius (dim {dim}, radius {radius})"
                    )));
                }
            }
            Domain::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::Config("box bounds must be non-empty and equally long".into()));
                }
                for (l, h) in lo.iter().zip(hi) {
                    if !l.is_finite() || !h.is_finite() || l > h {
                        return Err(Error::Config(format!("box bound [{l}, {h}] is invalid")));
                    }
                    if *l > 0.0 || *h < 0.0 {
                        return Err(Error::Config(format!("box bound [{l}, {h}] excludes the origin")));
                    }
                }
            }
            Domain::Simplex { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("simplex needs dim >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { dim, .. } | Domain::Simplex { dim } => *dim,
            Domain::Box { lo, .. } => lo.len(),
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } => 2.0 * radius,
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt(),
            Domain::Simplex { .. } => std::f64::consts::SQRT_2,
        }
    }

    /// Starting decision: the origin, or the barycenter for the simplex.
    pub fn initial_point(&self) -> Vector {
        match self {
            Domain::Simplex { dim } => Vector::from_element(*dim, 1.0 / *dim as f64),
            _ => Vector::zeros(self.dim()),
        }
    }

    /// Membership test with absolute tolerance `tol`.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Ball { radius, .. } => x.norm() <= radius + tol,
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            Domain::Simplex { .. } => x.iter().all(|v| *v >= -tol) && (x.sum() - 1.0).abs() <= tol,
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        ensure_dim(y, self.dim())?;
        ensure_finite(y, "projection input")?;
        Ok(match self {
            Domain::Ball { radius, .. } => {
                let n = y.norm();
                if n <= *radius {
                    y.clone()
                } else {
                    y * (radius / n)
                }
            }
            Domain::Box { lo, hi } => {
                Vector::from_iterator(y.len(), y.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)))
            }
            Domain::Simplex { .. } => project_simplex(y),
        })
    }

    /// `sup_{x∈X} ‖x‖₂`.
    pub fn max_norm(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } => *radius,
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt(),
            Domain::Simplex { .. } => 1.0,
        }
    }

    /// `sup_{x∈X} ‖x − c‖₂`.
    pub fn farthest_distance(&self, c: &Vector) -> f64 {
        match self {
            Domain::Ball { radius, .. } => c.norm() + radius,
            Domain::Box { lo, hi } => c
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(ci, (l, h))| (ci - l).abs().max((ci - h).abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            Domain::Simplex { dim } => {
                let base = c.norm_squared();
                (0..*dim).map(|i| (base - c[i] * c[i] + (1.0 - c[i]).powi(2)).sqrt()).fold(0.0, f64::max)
            }
        }
    }

    /// Maximum of `⟨a, x⟩` over the domain and a maximizer.
    pub fn support(&self, a: &Vector) -> (f64, Vector) {
        match self {
            Domain::Ball { radius, dim } => {
                let n = a.norm();
                if n == 0.0 {
                    (0.0, Vector::zeros(*dim))
                } else {
                    (radius * n, a * (radius / n))
                }
            }
            Domain::Box { lo, hi } => {
                let x = Vector::from_iterator(
                    lo.len(),
                    a.iter().zip(lo.iter().zip(hi)).map(|(ai, (l, h))| if *ai >= 0.0 { *h } else { *l }),
                );
                (a.dot(&x), x)
            }
            Domain::Simplex { dim } => {
                let (i, v) =
                    a.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best });
                let mut x = Vector::zeros(*dim);
                x[i] = 1.0;
                (v, x)
            }
        }
    }

    /// Vertices of a polytope domain (`None` for the ball).
    pub fn vertices(&self) -> Option<Vec<Vector>> {
        match self {
            Domain::Ball { .. } => None,
            Domain::Simplex { dim } => Some(
                (0..*dim)
                    .map(|i| {
                        let mut e = Vector::zeros(*dim);
                        e[i] = 1.0;
                        e
                    })
                    .collect(),
            ),
            Domain::Box { lo, hi } => {
                let d = lo.len();
                Some(
                    (0..(1usize << d))
                        .map(|mask| {
                            Vector::from_iterator(d, (0..d).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }))
                        })
                        .collect(),
                )
            }
        }
    }

    /// Axis-extreme points: `2d` points for ball and box, the `d` vertices
    /// for the simplex.
    pub fn extreme_points(&self) -> Vec<Vector> {
        let d = self.dim();
        match self {
            Domain::Ball { radius, .. } => (0..2 * d)
                .map(|k| {
                    let mut e = Vector::zeros(d);
                    e[k / 2] = if k % 2 == 0 { *radius } else { -radius };
                    e
                })
                .collect(),
            Domain::Box { lo, hi } => {
                let mid = Vector::from_iterator(d, lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)));
                (0..2 * d)
                    .map(|k| {
                        let mut e = mid.clone();
                        e[k / 2] = if k % 2 == 0 { hi[k / 2] } else { lo[k / 2] };
                        e
                    })
                    .collect()
            }
            Domain::Simplex { .. } => self.vertices().unwrap_or_default(),
        }
    }

    /// Random feasible point (uniform for ball and box, flat Dirichlet for the simplex).
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let d = self.dim();
        match self {
            Domain::Ball { radius, .. } => {
                let dir = random_unit(d, rng);
                let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
                dir * r
            }
            Domain::Box { lo, hi } => {
                Vector::from_iterator(d, lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()))
            }
            Domain::Simplex { .. } => {
                let e = Vector::from_iterator(d, (0..d).map(|_| Exp1.sample(rng)));
                let s: f64 = e.sum();
                e / s
            }
        }
    }

    /// Maximum of the convex quadratic `xᵀQx + 2qᵀx + r` over the domain,
    /// for positive semidefinite `Q`.
    pub fn sup_convex_quadratic(&self, q_mat: &Matrix, q: &Vector, r: f64) -> Result<f64> {
        let value = |x: &Vector| x.dot(&(q_mat * x)) + 2.0 * q.dot(x) + r;
        match self {
            Domain::Box { .. } if self.dim() > 20 => {
                Err(Error::InvalidInput("vertex enumeration supports boxes up to dimension 20".into()))
            }
            Domain::Box { .. } | Domain::Simplex { .. } => {
                Ok(self.vertices().expect("polytope").iter().map(value).fold(f64::NEG_INFINITY, f64::max))
            }
            Domain::Ball { radius, .. } => Ok(sup_quadratic_on_sphere(q_mat, q, *radius) + r),
        }
    }
}

/// Uniformly random unit vector.
pub fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Sorting-based Euclidean projection onto the probability simplex.
fn project_simplex(y: &Vector) -> Vector {
    let mut u: Vec<f64> = y.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    y.map(|v| (v - theta).max(0.0))
}

/// `max_{‖z‖ = R} zᵀQz + 2qᵀz` for positive semidefinite `Q`.
fn sup_quadratic_on_sphere(q_mat: &Matrix, q: &Vector, radius: f64) -> f64 {
    let eig = SymmetricEigen::new(q_mat.clone());
    let lam = eig.eigenvalues.clone();
    let qt = eig.eigenvectors.transpose() * q;
    let lmax = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = lam.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let top = |i: usize| lam[i] >= lmax - 1e-12 * scale;
    let objective = |z: &Vector| z.iter().zip(lam.iter()).map(|(zi, li)| li * zi * zi).sum::<f64>() + 2.0 * qt.dot(z);
    let qnorm = qt.norm();
    if qnorm == 0.0 {
        return lmax * radius * radius;
    }
    let secular = |mu: f64| -> f64 { qt.iter().zip(lam.iter()).map(|(qi, li)| (qi / (mu - li)).powi(2)).sum::<f64>() };
    let top_weight: f64 = (0..lam.len()).filter(|&i| top(i)).map(|i| qt[i] * qt[i]).sum();
    let tiny = 1e-12 * scale.max(qnorm / radius);
    let lower = lmax + tiny;
    if top_weight.sqrt() <= 1e-14 * qnorm && secular(lower) <= radius * radius {
        // Hard case: fill the top eigenspace to reach the sphere.
        let mut z = Vector::zeros(lam.len());
        for i in 0..lam.len() {
            if !top(i) {
                z[i] = qt[i] / (lmax - lam[i]);
            }
        }
        let rest = (radius * radius - z.norm_squared()).max(0.0).sqrt();
        let i_top = (0..lam.len()).find(|&i| top(i)).expect("non-empty spectrum");
        z[i_top] = rest;
        return objective(&z);
    }
    let mut lo = lower;
    let mut hi = lmax + qnorm / radius + tiny;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if secular(mid) > radius * radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let z = Vector::from_iterator(lam.len(), (0..lam.len()).map(|i| qt[i] / (mu - lam[i])));
    let z = if z.norm() > 0.0 { &z * (radius / z.norm()) } else { z };
    objective(&z)
}

/// Euclidean projection onto `domain`.
pub fn project_euclidean(domain: &Domain, y: &Vector) -> Result<Vector> {
    domain.project(y)
}

/// Result of [`minimize_quadratic`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSolution {
    /// Approximate minimizer (always feasible).
    pub x: Vector,
    /// Norm of the projected-gradient mapping at `x`.
    pub residual: f64,
    /// Iterations used.
    pub iterations: usize,
}

/// Minimizes `½xᵀAx + bᵀx` over `domain` for positive semidefinite `A`.
///
/// Uses accelerated projected gradient with step `1/λ_max(A)` and
/// adaptive restart. When `A` is positive definite the returned point is
/// within `tol` of the minimizer; otherwise the projected-gradient mapping
/// is below `tol`.
pub fn minimize_quadratic(domain: &Domain, a: &Matrix, b: &Vector, tol: f64) -> Result<QuadraticSolution> {
    let d = domain.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: a.nrows() });
    }
    ensure_dim(b, d)?;
    ensure_finite(b, "quadratic linear term")?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let (lmin, lmax) = eigen_range(a);
    if lmax <= 0.0 {
        // Linear objective: minimize ⟨b, x⟩ exactly.
        let (_, x) = domain.support(&(-b));
        return Ok(QuadraticSolution { x, residual: 0.0, iterations: 0 });
    }
    let mu = lmin.max(0.0);
    let step = 1.0 / lmax;
    let grad = |x: &Vector| a * x + b;
    let mut x = domain.project(&(-(b * step)))?;
    let mut x_prev = x.clone();
    let mut momentum = 1.0_f64;
    let mut residual = f64::INFINITY;
    for iteration in 0..QUADRATIC_ITERATION_CAP {
        let plain = domain.project(&(&x - grad(&x) * step))?;
        residual = (&x - &plain).norm() * lmax;
        let distance_bound = if mu > 0.0 { 2.0 * residual / mu } else { 0.0 };
        if residual <= tol && distance_bound <= tol {
            return Ok(QuadraticSolution { x: plain, residual, iterations: iteration });
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let y = &x + (&x - &x_prev) * ((momentum - 1.0) / next_momentum);
        let candidate = domain.project(&(&y - grad(&y) * step))?;
        if (&y - &candidate).dot(&(&candidate - &x)) > 0.0 {
            // Restart: momentum points uphill.
            x_prev = x.clone();
            x = plain;
            momentum = 1.0;
        } else {
            x_prev = std::mem::replace(&mut x, candidate);
            momentum = next_momentum;
        }
    }
    Err(Error::SolverFailure { residual, iterations: QUADRATIC_ITERATION_CAP })
}

/// Generalized projection `argmin_{x∈X} ‖x − y‖²_H`.
pub fn project_mahalanobis(domain: &Domain, h: &SpdMatrix, y: &Vector, tol: f64) -> Result<Vector> {
    ensure_dim(y, domain.dim())?;
    ensure_finite(y, "projection input")?;
    if h.dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), found: h.dim() });
    }
    if domain.contains(y, 0.0) {
        return Ok(y.clone());
    }
    let b = -(h.matrix() * y);
    Ok(minimize_quadratic(domain, h.matrix(), &b, tol)?.x)
}

/// Problem constants shared by learners, bounds and environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Gradient-norm bound `G`.
    #[serde(rename = "G")]
    pub g: f64,
    /// Domain diameter `D`.
    #[serde(rename = "D")]
    pub d: f64,
    /// Smoothness constant `L`.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// Strong-convexity modulus `λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Exp-concavity modulus `α`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Per-round bound on the stochastic variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_max_sq: Option<f64>,
    /// Per-round bound on the adversarial variation.
    #[serde(rename = "Sigma_max_sq", default, skip_serializing_if = "Option::is_none")]
    pub big_sigma_max_sq: Option<f64>,
}

impl ProblemParams {
    /// Parameters with only `G` and `D` set.
    pub fn new(g: f64, d: f64) -> Self {
        Self { g, d, ..Self::default() }
    }

    /// Sets `L`.
    pub fn with_smoothness(mut self, l: f64) -> Self {
        self.l = Some(l);
        self
    }

    /// Sets `λ`.
    pub fn with_strong_convexity(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    /// Sets `α`.
    pub fn with_exp_concavity(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    /// Checks that every present value is strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("G", Some(self.g)),
            ("D", Some(self.d)),
            ("L", self.l),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("sigma_max_sq", self.sigma_max_sq),
            ("Sigma_max_sq", self.big_sigma_max_sq),
        ];
        for (name, value) in named {
            if let Some(v) = value {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("parameter {name} must be positive and finite, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// `L`, or a configuration error naming the consumer.
    pub fn smoothness(&self, consumer: &str) -> Result<f64> {
        self.l.ok_or_else(|| Error::Config(format!("{consumer} requires the smoothness constant L")))
    }

    /// `λ`, or a configuration error naming the consumer.
    pub fn strong_convexity(&self, consumer: &str) -> Result<f64> {
        self.lambda.ok_or_else(|| Error::Config(format!("{consumer} requires the strong-convexity modulus lambda")))
    }

    /// `α`, or a configuration error naming the consumer.
    pub fn exp_concavity(&self, consumer: &str) -> Result<f64> {
        self.alpha.ok_or_else(|| Error::Config(format!("{consumer} requires the exp-concavity modulus alpha")))
    }

    /// `β = ½·min{1/(4GD), α}` used by the exp-concave learners.
    pub fn ons_beta(&self) -> Result<f64> {
        let alpha = self.exp_concavity("the exp-concave learners")?;
        Ok(0.5 * (1.0 / (4.0 * self.g * self.d)).min(alpha))
    }
}

/// Serializes a [`Vector`] as a flat JSON array of numbers.
pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        Ok(Vector::from_vec(raw))
    }
}
