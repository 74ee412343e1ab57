//! Three-round traces of every learner next to straight-line
//! reimplementations written with plain arrays.

use sea_oco::ensemble::{AltOptimismEnsemble, NonsmoothEnsemble, PoolKind, SmoothEnsemble, StepSizePool};
use sea_oco::geometry::vector;
use sea_oco::{
    Domain, FtrlConvex, FtrlExpConcave, FtrlStronglyConvex, ImplicitOmd, LossFn, OnlineLearner, OnlineNewtonOmd,
    OptimisticOmd, ProblemParams,
};

/// Largest coordinate gap tolerated between a learner and its oracle.
pub const TOL: f64 = 1e-10;

type V = [f64; 2];

fn add(a: V, b: V) -> V {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: V, b: V) -> V {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: V, s: f64) -> V {
    [a[0] * s, a[1] * s]
}

fn dot(a: V, b: V) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm2(a: V) -> f64 {
    dot(a, a)
}

fn ball(a: V, r: f64) -> V {
    let n = norm2(a).sqrt();
    if n <= r {
        a
    } else {
        scale(a, r / n)
    }
}

/// Quadratic `(lam/2)‖x − c‖²`.
struct Quad {
    c: V,
    lam: f64,
}

impl Quad {
    fn grad(&self, x: V) -> V {
        scale(sub(x, self.c), self.lam)
    }

    fn value(&self, x: V) -> f64 {
        0.5 * self.lam * norm2(sub(x, self.c))
    }

    fn loss(&self) -> LossFn {
        LossFn::shifted_quadratic(vector(&self.c), self.lam)
    }
}

fn sequence() -> Vec<Quad> {
    vec![Quad { c: [2.0, 0.5], lam: 1.0 }, Quad { c: [-0.3, 1.7], lam: 0.5 }, Quad { c: [0.4, -0.9], lam: 1.5 }]
}

fn deviation(got: &[sea_oco::Vector], expected: &[V]) -> f64 {
    assert_eq!(got.len(), expected.len());
    got.iter().zip(expected).flat_map(|(a, e)| (0..2).map(move |i| (a[i] - e[i]).abs())).fold(0.0, f64::max)
}

fn trace(learner: &mut dyn OnlineLearner, losses: &[Quad]) -> Vec<sea_oco::Vector> {
    let mut out = vec![learner.decision().clone()];
    for f in losses {
        learner.observe(&f.loss()).unwrap();
        out.push(learner.decision().clone());
    }
    out
}

pub fn omd_convex() -> f64 {
    let (g_bound, d, l, r) = (2.0, 2.0, 1.0, 1.0);
    let params = ProblemParams::new(g_bound, d).with_smoothness(l);
    let losses = sequence();
    let got = trace(&mut OptimisticOmd::convex(Domain::ball(2, r), &params).unwrap(), &losses);

    let delta = 10.0 * d * d * l * l;
    let eta = |vbar: f64| d / (delta + 4.0 * g_bound * g_bound + vbar).sqrt();
    let (mut xhat, mut x, mut prev, mut vbar) = ([0.0; 2], [0.0; 2], [0.0; 2], 0.0);
    let mut expected = vec![x];
    for f in &losses {
        let g = f.grad(x);
        let eta_t = eta(vbar);
        xhat = ball(sub(xhat, scale(g, eta_t)), r);
        vbar += norm2(sub(g, prev));
        x = ball(sub(xhat, scale(g, eta(vbar))), r);
        prev = g;
        expected.push(x);
    }
    deviation(&got, &expected)
}

pub fn omd_sc() -> f64 {
    let lambda = 0.5;
    let params = ProblemParams::new(2.0, 2.0).with_strong_convexity(lambda);
    let losses = sequence();
    let got = trace(&mut OptimisticOmd::strongly_convex(Domain::ball(2, 1.0), &params).unwrap(), &losses);

    let (mut xhat, mut x) = ([0.0; 2], [0.0; 2]);
    let mut expected = vec![x];
    for (i, f) in losses.iter().enumerate() {
        let t = (i + 1) as f64;
        let g = f.grad(x);
        xhat = ball(sub(xhat, scale(g, 2.0 / (lambda * t))), 1.0);
        x = ball(sub(xhat, scale(g, 2.0 / (lambda * (t + 1.0)))), 1.0);
        expected.push(x);
    }
    deviation(&got, &expected)
}

/// 2×2 symmetric matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy)]
struct Sym {
    a: f64,
    b: f64,
    c: f64,
}

impl Sym {
    fn scaled_identity(s: f64) -> Self {
        Sym { a: s, b: 0.0, c: s }
    }

    fn plus_outer(self, g: V, s: f64) -> Self {
        Sym { a: self.a + s * g[0] * g[0], b: self.b + s * g[0] * g[1], c: self.c + s * g[1] * g[1] }
    }

    fn solve(self, v: V) -> V {
        let det = self.a * self.c - self.b * self.b;
        [(self.c * v[0] - self.b * v[1]) / det, (self.a * v[1] - self.b * v[0]) / det]
    }
}

pub fn ons_interior() -> f64 {
    let (g_bound, d, alpha) = (2.0, 20.0, 0.5);
    let params = ProblemParams::new(g_bound, d).with_exp_concavity(alpha);
    let losses = sequence();
    let got = trace(&mut OnlineNewtonOmd::new(Domain::ball(2, 10.0), &params).unwrap(), &losses);

    let beta = 0.5 * (1.0 / (4.0 * g_bound * d)).min(alpha);
    let mut h = Sym::scaled_identity(1.0 + 0.5 * beta * g_bound * g_bound);
    let (mut xhat, mut x) = ([0.0; 2], [0.0; 2]);
    let mut expected = vec![x];
    for f in &losses {
        let g = f.grad(x);
        xhat = sub(xhat, h.solve(g));
        h = h.plus_outer(g, 0.5 * beta);
        x = sub(xhat, h.solve(g));
        expected.push(x);
    }
    deviation(&got, &expected)
}

pub fn ons_clamped() -> f64 {
    let (g_bound, d, alpha) = (3.0, 1.0, 2.0);
    let params = ProblemParams::new(g_bound, d).with_exp_concavity(alpha);
    let cs = [2.0, -1.5, 0.8];
    let mut learner = OnlineNewtonOmd::new(Domain::cube(1, -0.5, 0.5), &params).unwrap();
    let beta = 0.5 * (1.0 / (4.0 * g_bound * d)).min(alpha);
    let mut h = 1.0 + 0.5 * beta * g_bound * g_bound;
    let (mut xhat, mut x) = (0.0_f64, 0.0_f64);
    let mut worst = 0.0_f64;
    for c in cs {
        learner.observe(&LossFn::shifted_quadratic(vector(&[c]), 1.0)).unwrap();
        let g = x - c;
        xhat = (xhat - g / h).clamp(-0.5, 0.5);
        h += 0.5 * beta * g * g;
        x = (xhat - g / h).clamp(-0.5, 0.5);
        worst = worst.max((learner.decision()[0] - x).abs());
    }
    worst
}

pub fn ftrl_convex() -> f64 {
    let (g_bound, d, l, r) = (2.0, 2.0, 1.0, 1.0);
    let params = ProblemParams::new(g_bound, d).with_smoothness(l);
    let losses = sequence();
    let got = trace(&mut FtrlConvex::new(Domain::ball(2, r), &params).unwrap(), &losses);

    let delta = (9.0 * d.powi(4) * l * l + 6.0 * d * d * g_bound * g_bound).sqrt();
    let mut eta = d * d / delta;
    let (mut sum, mut prev, mut weighted, mut x) = ([0.0; 2], [0.0; 2], 0.0, [0.0; 2]);
    let mut expected = vec![x];
    for f in &losses {
        let g = f.grad(x);
        weighted += eta * norm2(sub(g, prev));
        eta = d * d / (delta + weighted);
        sum = add(sum, g);
        x = ball(scale(add(sum, g), -0.5 * eta), r);
        prev = g;
        expected.push(x);
    }
    deviation(&got, &expected)
}

pub fn ftrl_sc() -> f64 {
    let lambda = 0.7;
    let params = ProblemParams::new(2.0, 2.0).with_strong_convexity(lambda);
    let losses = sequence();
    let got = trace(&mut FtrlStronglyConvex::new(Domain::ball(2, 1.0), &params).unwrap(), &losses);

    let x0 = [0.0; 2];
    let (mut sum_x, mut sum_g, mut x) = ([0.0; 2], [0.0; 2], x0);
    let mut expected = vec![x];
    for (i, f) in losses.iter().enumerate() {
        let t = (i + 1) as f64;
        let g = f.grad(x);
        sum_x = add(sum_x, x);
        sum_g = add(sum_g, g);
        let numerator = sub(sub(scale(add(x0, sum_x), lambda), sum_g), g);
        x = ball(scale(numerator, 1.0 / (lambda * (t + 1.0))), 1.0);
        expected.push(x);
    }
    deviation(&got, &expected)
}

pub fn ftrl_exp() -> f64 {
    let (g_bound, d, alpha) = (2.0, 20.0, 0.5);
    let params = ProblemParams::new(g_bound, d).with_exp_concavity(alpha);
    let losses = sequence();
    let got = trace(&mut FtrlExpConcave::new(Domain::ball(2, 10.0), &params).unwrap(), &losses);

    let beta = 0.5 * (1.0 / (4.0 * g_bound * d)).min(alpha);
    let mut a = Sym::scaled_identity(1.0 + beta * g_bound * g_bound);
    let (mut linear, mut x) = ([0.0; 2], [0.0; 2]);
    let mut expected = vec![x];
    for f in &losses {
        let g = f.grad(x);
        a = a.plus_outer(g, beta);
        linear = add(linear, sub(g, scale(g, beta * dot(g, x))));
        x = scale(a.solve(add(linear, g)), -1.0);
        expected.push(x);
    }
    deviation(&got, &expected)
}

/// `argmin_{‖x‖≤r} (lam/2)‖x − c‖² + ‖x − y‖²/(2η)`.
fn quad_prox(f: &Quad, y: V, eta: f64, r: f64) -> V {
    ball(scale(add(scale(y, 1.0 / eta), scale(f.c, f.lam)), 1.0 / (f.lam + 1.0 / eta)), r)
}

pub fn implicit_omd() -> f64 {
    let (g_bound, d, r) = (2.0, 2.0, 1.0);
    let params = ProblemParams::new(g_bound, d);
    let losses = sequence();
    let got = trace(&mut ImplicitOmd::adaptive(Domain::ball(2, r), &params).unwrap(), &losses);

    let eta = |v: f64| d / (1.0 + 4.0 * g_bound * g_bound + v).sqrt();
    let (mut xhat, mut x, mut variation) = ([0.0; 2], [0.0; 2], 0.0);
    let mut expected = vec![x];
    for (i, f) in losses.iter().enumerate() {
        let g = f.grad(x);
        xhat = ball(sub(xhat, scale(g, eta(variation))), r);
        let prev = if i == 0 { [0.0; 2] } else { losses[i - 1].grad(x) };
        variation += norm2(sub(g, prev));
        x = quad_prox(f, xhat, eta(variation), r);
        expected.push(x);
    }
    deviation(&got, &expected)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn mix(p: &[f64], xs: &[V]) -> V {
    p.iter().zip(xs).fold([0.0; 2], |acc, (w, x)| add(acc, scale(*x, *w)))
}

pub fn alg_smooth() -> f64 {
    let (g_bound, d, l, r) = (2.0, 2.0, 1.0, 1.0);
    let etas = [0.1, 0.3, 0.6];
    let params = ProblemParams::new(g_bound, d).with_smoothness(l);
    let pool = StepSizePool { etas: etas.to_vec(), kind: PoolKind::Smooth, clamped: false };
    let losses = sequence();
    let got = trace(&mut SmoothEnsemble::with_pool(Domain::ball(2, r), &params, pool).unwrap(), &losses);

    let n = etas.len();
    let lam = 2.0 * l;
    let cap = 1.0 / (8.0 * d * d * l);
    let mut xhat = vec![[0.0; 2]; n];
    let mut xs = vec![[0.0; 2]; n];
    let mut prev_xs = vec![[0.0; 2]; n];
    let mut base_prev_g = vec![[0.0; 2]; n];
    let mut cum = vec![0.0; n];
    let mut p = vec![1.0 / n as f64; n];
    let (mut vbar, mut prev_g) = (0.0, [0.0; 2]);
    let mut x = mix(&p, &xs);
    let mut expected = vec![x];
    for (t, f) in losses.iter().enumerate() {
        let g = f.grad(x);
        let feedback: Vec<f64> =
            (0..n).map(|i| dot(g, xs[i]) + if t >= 1 { lam * norm2(sub(xs[i], prev_xs[i])) } else { 0.0 }).collect();
        let mut next = vec![[0.0; 2]; n];
        for i in 0..n {
            xhat[i] = ball(sub(xhat[i], scale(g, etas[i])), r);
            next[i] = ball(sub(xhat[i], scale(g, etas[i])), r);
            base_prev_g[i] = g;
        }
        if t >= 1 {
            vbar += norm2(sub(g, prev_g));
        }
        let eps = if vbar == 0.0 { cap } else { cap.min(((n as f64).ln() / (d * d * vbar)).sqrt()) };
        for i in 0..n {
            cum[i] += feedback[i];
        }
        let logits: Vec<f64> =
            (0..n).map(|i| -eps * (cum[i] + dot(g, next[i]) + lam * norm2(sub(next[i], xs[i])))).collect();
        p = softmax(&logits);
        prev_xs = xs.clone();
        xs = next;
        x = mix(&p, &xs);
        prev_g = g;
        expected.push(x);
    }
    deviation(&got, &expected)
}

pub fn alg_nonsmooth() -> f64 {
    let r = 1.0;
    let etas = [0.2, 0.8];
    let pool = StepSizePool { etas: etas.to_vec(), kind: PoolKind::Nonsmooth, clamped: false };
    let losses = sequence();
    let got = trace(&mut NonsmoothEnsemble::with_pool(Domain::ball(2, r), pool).unwrap(), &losses);

    let n = etas.len();
    let reference = [0.0; 2];
    let mut xhat = vec![[0.0; 2]; n];
    let mut xs = vec![[0.0; 2]; n];
    let mut cum = vec![0.0; n];
    let mut p = vec![1.0 / n as f64; n];
    let mut variation = 0.0;
    let mut x = mix(&p, &xs);
    let mut expected = vec![x];
    for (t, f) in losses.iter().enumerate() {
        let feedback: Vec<f64> = xs.iter().map(|xi| f.value(*xi)).collect();
        let mut largest = 0.0_f64;
        for i in 0..n {
            let now = feedback[i] - f.value(reference);
            let before = if t == 0 { 0.0 } else { losses[t - 1].value(xs[i]) - losses[t - 1].value(reference) };
            largest = largest.max((now - before).abs());
        }
        variation += largest * largest;
        let eps = 1.0 / (1.0 + variation).sqrt();
        let mut next = vec![[0.0; 2]; n];
        for i in 0..n {
            xhat[i] = ball(sub(xhat[i], scale(f.grad(xs[i]), etas[i])), r);
            next[i] = quad_prox(f, xhat[i], etas[i], r);
        }
        for i in 0..n {
            cum[i] += feedback[i];
        }
        let logits: Vec<f64> = (0..n).map(|i| -eps * (cum[i] + f.value(next[i]))).collect();
        p = softmax(&logits);
        xs = next;
        x = mix(&p, &xs);
        expected.push(x);
    }
    deviation(&got, &expected)
}

pub fn alg_alt_optimism() -> f64 {
    let (g_bound, d, l, r) = (2.0, 2.0, 1.0, 1.0);
    let etas = [0.05, 0.25];
    let params = ProblemParams::new(g_bound, d).with_smoothness(l);
    let pool = StepSizePool { etas: etas.to_vec(), kind: PoolKind::AltOptimism, clamped: false };
    let losses = sequence();
    let got = trace(&mut AltOptimismEnsemble::with_pool(Domain::ball(2, r), &params, pool).unwrap(), &losses);

    let n = etas.len();
    let delta = 4.0 * d * d * l * l * ((n as f64).ln() + 2.0 * d * d);
    let mut xhat = vec![[0.0; 2]; n];
    let mut xs = vec![[0.0; 2]; n];
    let mut base_prev = vec![[0.0; 2]; n];
    let mut cum = vec![0.0; n];
    let mut p = vec![1.0 / n as f64; n];
    let (mut variation, mut m_prev) = (0.0, [0.0; 2]);
    let mut x = mix(&p, &xs);
    let mut expected = vec![x];
    for f in &losses {
        let g = f.grad(x);
        let eps = 1.0 / (delta + 4.0 * g_bound * g_bound + variation).sqrt();
        variation += norm2(sub(g, m_prev));
        let feedback: Vec<f64> = xs.iter().map(|xi| dot(g, *xi)).collect();
        let mut next = vec![[0.0; 2]; n];
        for i in 0..n {
            let gi = f.grad(xs[i]);
            xhat[i] = ball(sub(xhat[i], scale(gi, etas[i])), r);
            next[i] = ball(sub(xhat[i], scale(gi, etas[i])), r);
            base_prev[i] = gi;
        }
        let provisional = mix(&p, &next);
        let m = f.grad(provisional);
        for i in 0..n {
            cum[i] += feedback[i];
        }
        let logits: Vec<f64> = (0..n).map(|i| -eps * (cum[i] + dot(m, next[i]))).collect();
        p = softmax(&logits);
        xs = next;
        x = mix(&p, &xs);
        m_prev = m;
        expected.push(x);
    }
    deviation(&got, &expected)
}

/// Largest deviation of every learner from its oracle, by learner name.
pub fn all() -> Vec<(&'static str, f64)> {
    vec![
        ("omd_convex", omd_convex()),
        ("omd_sc", omd_sc()),
        ("ons_interior", ons_interior()),
        ("ons_clamped", ons_clamped()),
        ("ftrl_convex", ftrl_convex()),
        ("ftrl_sc", ftrl_sc()),
        ("ftrl_exp", ftrl_exp()),
        ("implicit_omd", implicit_omd()),
        ("alg_smooth", alg_smooth()),
        ("alg_nonsmooth", alg_nonsmooth()),
        ("alg_alt_optimism", alg_alt_optimism()),
    ]
}
