//! Parametric loss families with value, (sub)gradient and prox oracles.
//!
//! Every smooth family has an affine gradient `∇f(x) = Ax + b`, which the
//! environments use to compute variance and variation quantities exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    eigen_range, ensure_dim, ensure_finite, minimize_quadratic, serde_vector, Domain, Matrix, Vector,
};

/// Default prox tolerance.
pub const PROX_TOL: f64 = 1e-10;

/// Iteration cap of the iterative prox fallback.
pub const PROX_ITERATION_CAP: usize = 50_000;

/// A round function `f_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossFn {
    /// `f(x) = ⟨g, x⟩`.
    Linear {
        #[serde(with = "serde_vector")]
        g: Vector,
    },
    /// `f(x) = (lam/2)‖x − c‖²`.
    ShiftedQuadratic {
        #[serde(with = "serde_vector")]
        c: Vector,
        lam: f64,
    },
    /// `f(x) = ½(⟨a, x⟩ − b)²`.
    SquaredLinear {
        #[serde(with = "serde_vector")]
        a: Vector,
        b: f64,
    },
    /// `f(x) = |⟨a, x⟩ − b|`.
    Absolute {
        #[serde(with = "serde_vector")]
        a: Vector,
        b: f64,
    },
    /// `f(x) = Σ_k w_k f_k(x)` with non-negative weights.
    Sum { terms: Vec<WeightedLoss> },
}

/// One term of a [`LossFn::Sum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedLoss {
    pub weight: f64,
    pub loss: LossFn,
}

/// The conditional expectation `F_t` of a round function.
///
/// `exact` is false when the expectation is only known approximately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLoss {
    pub loss: LossFn,
    pub exact: bool,
}

impl ExpectedLoss {
    /// Exact expectation given by `loss`.
    pub fn exact(loss: LossFn) -> Self {
        Self { loss, exact: true }
    }

    /// `F(x)`.
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        self.loss.eval(x)
    }

    /// `∇F(x)`.
    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.loss.grad(x)
    }
}

/// A single absolute-value term `w·|⟨a, x⟩ − b|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kink {
    pub weight: f64,
    pub a: Vector,
    pub b: f64,
}

impl LossFn {
    /// `⟨g, x⟩`.
    pub fn linear(g: Vector) -> Self {
        LossFn::Linear { g }
    }

    /// `(lam/2)‖x − c‖²`.
    pub fn shifted_quadratic(c: Vector, lam: f64) -> Self {
        LossFn::ShiftedQuadratic { c, lam }
    }

    /// `½(⟨a, x⟩ − b)²`.
    pub fn squared_linear(a: Vector, b: f64) -> Self {
        LossFn::SquaredLinear { a, b }
    }

    /// `|⟨a, x⟩ − b|`.
    pub fn absolute(a: Vector, b: f64) -> Self {
        LossFn::Absolute { a, b }
    }

    /// Weighted sum of losses.
    pub fn sum(terms: Vec<(f64, LossFn)>) -> Self {
        LossFn::Sum { terms: terms.into_iter().map(|(weight, loss)| WeightedLoss { weight, loss }).collect() }
    }

    /// Ambient dimension, or `None` for an empty sum.
    pub fn dim(&self) -> Option<usize> {
        match self {
            LossFn::Linear { g } => Some(g.len()),
            LossFn::ShiftedQuadratic { c, .. } => Some(c.len()),
            LossFn::SquaredLinear { a, .. } | LossFn::Absolute { a, .. } => Some(a.len()),
            LossFn::Sum { terms } => terms.first().and_then(|t| t.loss.dim()),
        }
    }

    /// Checks parameters for finiteness, sign constraints and dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let check_scalar = |name: &str, v: f64, nonneg: bool| -> Result<()> {
            if !v.is_finite() || (nonneg && v < 0.0) {
                Err(Error::InvalidInput(format!("loss parameter {name} = {v} is invalid")))
            } else {
                Ok(())
            }
        };
        match self {
            LossFn::Linear { g } => {
                ensure_dim(g, dim)?;
                ensure_finite(g, "linear loss g")
            }
            LossFn::ShiftedQuadratic { c, lam } => {
                ensure_dim(c, dim)?;
                ensure_finite(c, "quadratic centre c")?;
                check_scalar("lam", *lam, true)
            }
            LossFn::SquaredLinear { a, b } | LossFn::Absolute { a, b } => {
                ensure_dim(a, dim)?;
                ensure_finite(a, "loss direction a")?;
                check_scalar("b", *b, false)
            }
            LossFn::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidInput("sum loss needs at least one term".into()));
                }
                for t in terms {
                    check_scalar("weight", t.weight, true)?;
                    t.loss.validate(dim)?;
                }
                Ok(())
            }
        }
    }

    fn check_point(&self, x: &Vector) -> Result<()> {
        if let Some(d) = self.dim() {
            ensure_dim(x, d)?;
        }
        Ok(())
    }

    /// `f(x)`.
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &Vector) -> f64 {
        match self {
            LossFn::Linear { g } => g.dot(x),
            LossFn::ShiftedQuadratic { c, lam } => 0.5 * lam * (x - c).norm_squared(),
            LossFn::SquaredLinear { a, b } => 0.5 * (a.dot(x) - b).powi(2),
            LossFn::Absolute { a, b } => (a.dot(x) - b).abs(),
            LossFn::Sum { terms } => terms.iter().map(|t| t.weight * t.loss.eval_unchecked(x)).sum(),
        }
    }

    /// Gradient, or the midpoint subgradient `0·a` at kinks of `Absolute`.
    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check_point(x)?;
        Ok(self.grad_unchecked(x))
    }

    fn grad_unchecked(&self, x: &Vector) -> Vector {
        match self {
            LossFn::Linear { g } => g.clone(),
            LossFn::ShiftedQuadratic { c, lam } => (x - c) * *lam,
            LossFn::SquaredLinear { a, b } => a * (a.dot(x) - b),
            LossFn::Absolute { a, b } => {
                let r = a.dot(x) - b;
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                a * s
            }
            LossFn::Sum { terms } => {
                let mut g = Vector::zeros(x.len());
                for t in terms {
                    g += t.loss.grad_unchecked(x) * t.weight;
                }
                g
            }
        }
    }

    /// True when the function is differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        match self {
            LossFn::Absolute { a, .. } => a.iter().all(|v| *v == 0.0),
            LossFn::Sum { terms } => terms.iter().all(|t| t.weight == 0.0 || t.loss.is_smooth()),
            _ => true,
        }
    }

    /// `(A, b)` with `∇f(x) = Ax + b`, when the gradient is affine.
    pub fn affine_gradient(&self, dim: usize) -> Option<(Matrix, Vector)> {
        match self {
            LossFn::Linear { g } => Some((Matrix::zeros(dim, dim), g.clone())),
            LossFn::ShiftedQuadratic { c, lam } => Some((Matrix::identity(dim, dim) * *lam, -(c * *lam))),
            LossFn::SquaredLinear { a, b } => Some((a * a.transpose(), -(a * *b))),
            LossFn::Absolute { a, .. } if a.iter().all(|v| *v == 0.0) => {
                Some((Matrix::zeros(dim, dim), Vector::zeros(dim)))
            }
            LossFn::Absolute { .. } => None,
            LossFn::Sum { terms } => {
                let mut a = Matrix::zeros(dim, dim);
                let mut b = Vector::zeros(dim);
                for t in terms {
                    let (ak, bk) = t.loss.affine_gradient(dim)?;
                    a += ak * t.weight;
                    b += bk * t.weight;
                }
                Some((a, b))
            }
        }
    }

    /// Splits the function into its affine-gradient part and absolute-value
    /// terms: `f = smooth + Σ w_k|⟨a_k, x⟩ − b_k|`.
    pub fn decompose(&self, dim: usize) -> (Matrix, Vector, Vec<Kink>) {
        let mut a = Matrix::zeros(dim, dim);
        let mut b = Vector::zeros(dim);
        let mut kinks = Vec::new();
        self.decompose_into(1.0, dim, &mut a, &mut b, &mut kinks);
        (a, b, kinks)
    }

    fn decompose_into(&self, weight: f64, dim: usize, a: &mut Matrix, b: &mut Vector, kinks: &mut Vec<Kink>) {
        match self {
            LossFn::Absolute { a: dir, b: offset } => {
                if dir.iter().any(|v| *v != 0.0) && weight != 0.0 {
                    kinks.push(Kink { weight, a: dir.clone(), b: *offset });
                }
            }
            LossFn::Sum { terms } => {
                for t in terms {
                    t.loss.decompose_into(weight * t.weight, dim, a, b, kinks);
                }
            }
            smooth => {
                let (ak, bk) = smooth.affine_gradient(dim).expect("smooth family");
                *a += ak * weight;
                *b += bk * weight;
            }
        }
    }

    /// Smoothness constant: `λ_max(A)` for affine gradients, `None` otherwise.
    pub fn smoothness(&self, dim: usize) -> Option<f64> {
        self.affine_gradient(dim).map(|(a, _)| eigen_range(&a).1.max(0.0))
    }

    /// Upper bound on `sup_{x∈X} ‖∇f(x)‖₂`, exact for affine gradients.
    pub fn grad_bound(&self, domain: &Domain) -> Result<f64> {
        let d = domain.dim();
        if let Some((a, b)) = self.affine_gradient(d) {
            let q = a.transpose() * &a;
            let lin = a.transpose() * &b;
            return Ok(domain.sup_convex_quadratic(&q, &lin, b.norm_squared())?.max(0.0).sqrt());
        }
        Ok(match self {
            LossFn::Absolute { a, .. } => a.norm(),
            LossFn::Sum { terms } => {
                let mut total = 0.0;
                for t in terms {
                    total += t.weight * t.loss.grad_bound(domain)?;
                }
                total
            }
            _ => unreachable!("affine families handled above"),
        })
    }

    /// Implicit step `argmin_{x∈X} f(x) + (1/2η)‖x − x̂‖²`.
    pub fn prox(&self, xhat: &Vector, eta: f64, domain: &Domain, tol: f64) -> Result<Vector> {
        let d = domain.dim();
        ensure_dim(xhat, d)?;
        ensure_finite(xhat, "prox centre")?;
        self.check_point(xhat)?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidInput(format!("prox step must be positive, got {eta}")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("prox tolerance must be positive, got {tol}")));
        }
        let (a, b, kinks) = self.decompose(d);
        let inv_eta = 1.0 / eta;
        if kinks.is_empty() {
            return prox_quadratic(&a, &b, xhat, inv_eta, domain, tol);
        }
        let alpha = isotropic_scale(&a).ok_or_else(|| {
            Error::InvalidInput("prox of a non-smooth loss needs its smooth part to have an isotropic Hessian".into())
        })?;
        let curvature = alpha + inv_eta;
        let base = (xhat * inv_eta - &b) / curvature;
        let point = |s: &[f64]| -> Result<Vector> {
            let mut z = base.clone();
            for (k, sk) in kinks.iter().zip(s) {
                z -= &k.a * (k.weight * sk / curvature);
            }
            domain.project(&z)
        };
        if kinks.len() == 1 {
            return prox_single_kink(&kinks[0], point);
        }
        prox_dual_ascent(self, &kinks, xhat, eta, curvature, point, tol)
    }
}

/// `c` when `A = c·I` up to rounding.
fn isotropic_scale(a: &Matrix) -> Option<f64> {
    let d = a.nrows();
    let c = a.trace() / d as f64;
    let gap = (a - Matrix::identity(d, d) * c).amax();
    (gap <= 1e-14 * c.abs().max(1.0)).then_some(c)
}

fn prox_quadratic(a: &Matrix, b: &Vector, xhat: &Vector, inv_eta: f64, domain: &Domain, tol: f64) -> Result<Vector> {
    let d = domain.dim();
    let h = a + Matrix::identity(d, d) * inv_eta;
    let rhs = xhat * inv_eta - b;
    if let Some(c) = isotropic_scale(a) {
        return domain.project(&(rhs / (c + inv_eta)));
    }
    let chol =
        h.clone().cholesky().ok_or_else(|| Error::InvalidInput("prox Hessian is not positive definite".into()))?;
    let z = chol.solve(&rhs);
    if domain.contains(&z, 0.0) {
        return Ok(z);
    }
    Ok(minimize_quadratic(domain, &h, &(-rhs), tol)?.x)
}

/// One absolute-value term: the dual is a concave function of a scalar
/// `s ∈ [−1, 1]` whose derivative `⟨a, x(s)⟩ − b` is non-increasing, so
/// bisection on its sign recovers the exact minimizer `x(s*)`.
fn prox_single_kink(kink: &Kink, point: impl Fn(&[f64]) -> Result<Vector>) -> Result<Vector> {
    let slope = |s: f64| -> Result<(f64, Vector)> {
        let x = point(&[s])?;
        Ok((kink.a.dot(&x) - kink.b, x))
    };
    let (hi_slope, hi_x) = slope(1.0)?;
    if hi_slope >= 0.0 {
        return Ok(hi_x);
    }
    let (lo_slope, lo_x) = slope(-1.0)?;
    if lo_slope <= 0.0 {
        return Ok(lo_x);
    }
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (m, _) = slope(mid)?;
        if m > 0.0 {
            lo = mid;
        } else if m < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
            break;
        }
    }
    point(&[0.5 * (lo + hi)])
}

/// Several absolute-value terms: accelerated projected gradient ascent on
/// the box-constrained dual, stopped by the primal–dual gap.
fn prox_dual_ascent(
    f: &LossFn,
    kinks: &[Kink],
    xhat: &Vector,
    eta: f64,
    curvature: f64,
    point: impl Fn(&[f64]) -> Result<Vector>,
    tol: f64,
) -> Result<Vector> {
    let k = kinks.len();
    let primal = |x: &Vector| -> f64 { f.eval_unchecked(x) + 0.5 / eta * (x - xhat).norm_squared() };
    // Lagrangian at (x, s) differs from the primal only in the kink terms.
    let dual = |x: &Vector, s: &[f64]| -> f64 {
        let mut v = primal(x);
        for (kink, sk) in kinks.iter().zip(s) {
            let r = kink.a.dot(x) - kink.b;
            v += kink.weight * (sk * r - r.abs());
        }
        v
    };
    let dual_grad = |x: &Vector| -> Vec<f64> { kinks.iter().map(|kk| kk.weight * (kk.a.dot(x) - kk.b)).collect() };
    let lipschitz: f64 = kinks.iter().map(|kk| (kk.weight * kk.a.norm()).powi(2)).sum::<f64>() / curvature;
    let step = 1.0 / lipschitz.max(1e-300);
    let clamp = |v: f64| v.clamp(-1.0, 1.0);
    let mut s = vec![0.0; k];
    let mut s_prev = s.clone();
    let mut momentum = 1.0_f64;
    let mut gap = f64::INFINITY;
    for _ in 0..PROX_ITERATION_CAP {
        let x = point(&s)?;
        gap = primal(&x) - dual(&x, &s);
        if gap <= tol {
            return Ok(x);
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let y: Vec<f64> = s.iter().zip(&s_prev).map(|(a, b)| clamp(a + beta * (a - b))).collect();
        let xy = point(&y)?;
        let gy = dual_grad(&xy);
        let next: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| clamp(yi + step * gi)).collect();
        let uphill: f64 = y.iter().zip(&next).zip(&s).map(|((yi, ni), si)| (ni - yi) * (ni - si)).sum();
        if uphill < 0.0 {
            momentum = 1.0;
            s_prev = s.clone();
        } else {
            s_prev = std::mem::replace(&mut s, next);
            momentum = next_momentum;
        }
    }
    Err(Error::SolverFailure { residual: gap, iterations: PROX_ITERATION_CAP })
}

/// Free-function form of [`LossFn::eval`].
pub fn eval(f: &LossFn, x: &Vector) -> Result<f64> {
    f.eval(x)
}

/// Free-function form of [`LossFn::grad`].
pub fn grad(f: &LossFn, x: &Vector) -> Result<Vector> {
    f.grad(x)
}

/// Free-function form of [`LossFn::prox`].
pub fn prox(f: &LossFn, xhat: &Vector, eta: f64, domain: &Domain, tol: f64) -> Result<Vector> {
    f.prox(xhat, eta, domain, tol)
}
