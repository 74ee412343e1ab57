//! Loss values, gradients, prox steps and gradient bounds.

use proptest::prelude::*;
use sea_oco::geometry::vector;
use sea_oco::losses::PROX_TOL;
use sea_oco::{Domain, LossFn, Vector};

fn families() -> Vec<LossFn> {
    vec![
        LossFn::linear(vector(&[0.3, -0.7])),
        LossFn::shifted_quadratic(vector(&[0.2, 0.4]), 1.5),
        LossFn::squared_linear(vector(&[0.8, -0.6]), 0.3),
        LossFn::absolute(vector(&[0.6, 0.8]), 0.1),
        LossFn::sum(vec![
            (0.5, LossFn::shifted_quadratic(vector(&[-0.3, 0.1]), 2.0)),
            (2.0, LossFn::absolute(vector(&[1.0, 0.0]), 0.2)),
            (1.0, LossFn::absolute(vector(&[0.0, 1.0]), -0.4)),
        ]),
    ]
}

fn finite_difference(f: &LossFn, x: &Vector) -> Vector {
    let h = 1e-6;
    Vector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            (f.eval(&up).unwrap() - f.eval(&down).unwrap()) / (2.0 * h)
        }),
    )
}

#[test]
fn values_match_closed_forms() {
    let x = vector(&[0.5, -1.0]);
    assert!((LossFn::linear(vector(&[2.0, 1.0])).eval(&x).unwrap() - 0.0).abs() < 1e-15);
    assert!((LossFn::shifted_quadratic(vector(&[0.0, 0.0]), 2.0).eval(&x).unwrap() - 1.25).abs() < 1e-15);
    assert!((LossFn::squared_linear(vector(&[1.0, 1.0]), 0.5).eval(&x).unwrap() - 0.5).abs() < 1e-15);
    assert!((LossFn::absolute(vector(&[1.0, 1.0]), 0.5).eval(&x).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let f = LossFn::linear(vector(&[1.0, 2.0]));
    assert!(f.eval(&vector(&[1.0])).is_err());
    assert!(f.grad(&vector(&[1.0, 2.0, 3.0])).is_err());
}

proptest! {
    #[test]
    fn gradients_match_finite_differences(x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
        let x = vector(&[x0, x1]);
        for f in families() {
            if !f.is_smooth() {
                continue;
            }
            let g = f.grad(&x).unwrap();
            let fd = finite_difference(&f, &x);
            prop_assert!((g - fd).norm() < 1e-6, "{f:?}");
        }
    }

    #[test]
    fn subgradients_satisfy_the_subgradient_inequality(
        x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, y0 in -1.0f64..1.0, y1 in -1.0f64..1.0,
    ) {
        let x = vector(&[x0, x1]);
        let y = vector(&[y0, y1]);
        for f in families() {
            let g = f.grad(&x).unwrap();
            prop_assert!(f.eval(&y).unwrap() >= f.eval(&x).unwrap() + g.dot(&(&y - &x)) - 1e-12, "{f:?}");
        }
    }

    #[test]
    fn prox_beats_every_grid_point(x0 in -1.5f64..1.5, x1 in -1.5f64..1.5, eta in 0.05f64..3.0) {
        let domain = Domain::ball(2, 1.0);
        let xhat = domain.project(&vector(&[x0, x1])).unwrap();
        for f in families() {
            let obj = |z: &Vector| f.eval(z).unwrap() + (z - &xhat).norm_squared() / (2.0 * eta);
            let p = f.prox(&xhat, eta, &domain, PROX_TOL).unwrap();
            prop_assert!(domain.contains(&p, 1e-12));
            let best = obj(&p);
            let n = 40;
            for i in 0..=n {
                for j in 0..=n {
                    let z = vector(&[-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64]);
                    if z.norm() <= 1.0 {
                        prop_assert!(best <= obj(&z) + 1e-8, "{f:?}: prox {best} above grid {}", obj(&z));
                    }
                }
            }
        }
    }
}

#[test]
fn prox_of_absolute_loss_stops_on_the_kink() {
    let domain = Domain::ball(2, 10.0);
    let f = LossFn::absolute(vector(&[1.0, 0.0]), 0.0);
    let p = f.prox(&vector(&[0.3, 0.5]), 1.0, &domain, PROX_TOL).unwrap();
    assert!(p[0].abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    let p = f.prox(&vector(&[2.0, 0.5]), 1.0, &domain, PROX_TOL).unwrap();
    assert!((p[0] - 1.0).abs() < 1e-12);
}

#[test]
fn grad_bound_dominates_sampled_gradients() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for domain in [Domain::ball(2, 1.0), Domain::cube(2, -0.5, 0.5), Domain::simplex(2)] {
        for f in families() {
            let bound = f.grad_bound(&domain).unwrap();
            let mut best: f64 = 0.0;
            for _ in 0..5000 {
                best = best.max(f.grad(&domain.sample_point(&mut rng)).unwrap().norm());
            }
            for x in domain.extreme_points() {
                best = best.max(f.grad(&x).unwrap().norm());
            }
            assert!(bound >= best - 1e-12, "{f:?} on {domain:?}: {bound} < {best}");
        }
    }
}

#[test]
fn grad_bound_is_exact_for_quadratics_on_the_ball() {
    let f = LossFn::shifted_quadratic(vector(&[0.5, 0.0]), 2.0);
    let bound = f.grad_bound(&Domain::ball(2, 1.0)).unwrap();
    assert!((bound - 3.0).abs() < 1e-9);
}
