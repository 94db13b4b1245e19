mod common;

use common::{field, field_with, quad_backend};
use proptest::prelude::*;
use punctual::model::FitnessModel;
use punctual::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn monte_carlo_integrals_match_radial2d() {
    let f = field(FitnessModel::radial2d());
    let x = [0.4, -0.25];
    let c = f.eval(&x).unwrap();
    let grad = f.model().selection_gradient(&x).unwrap();
    let h11 = f.model().hess11(&x, &x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000_000usize;
    let (mut b, mut bt, mut a) = ([0.0; 2], [0.0; 2], [0.0; 4]);
    let (mut b2, mut a2) = ([0.0; 2], [0.0; 4]);
    for _ in 0..n {
        let h: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        let s: f64 = h[0] * grad[0] + h[1] * grad[1];
        if s <= 0.0 {
            continue;
        }
        let q = h[0] * (h11[(0, 0)] * h[0] + h11[(0, 1)] * h[1]) + h[1] * (h11[(1, 0)] * h[0] + h11[(1, 1)] * h[1]);
        for k in 0..2 {
            b[k] += h[k] * s;
            b2[k] += (h[k] * s).powi(2);
            bt[k] += 0.5 * h[k] * q;
            for l in 0..2 {
                let v = h[k] * h[l] * s;
                a[2 * k + l] += v;
                a2[2 * k + l] += v * v;
            }
        }
    }
    let nf = n as f64;
    for k in 0..2 {
        let mean = b[k] / nf;
        let se = ((b2[k] / nf - mean * mean) / nf).sqrt();
        assert!((mean - c.b[k]).abs() <= 4.0 * se, "b{k}: {mean} vs {}", c.b[k]);
        assert!((bt[k] / nf - c.b_tilde[k]).abs() <= 5e-3, "bt{k}");
        for l in 0..2 {
            let m = a[2 * k + l] / nf;
            let se = ((a2[2 * k + l] / nf - m * m) / nf).sqrt();
            assert!((m - c.a[(k, l)]).abs() <= 4.0 * se, "a{k}{l}: {m} vs {}", c.a[(k, l)]);
        }
    }
}

fn min_eig(a: &Matrix) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn a_is_symmetric_psd_and_sigma_squares_to_a(x in -1.8f64..1.8, y in -1.8f64..1.8) {
        let f = field(FitnessModel::radial2d());
        let c = f.eval(&[x, y]).unwrap();
        prop_assert!((&c.a - c.a.transpose()).norm() <= 1e-14 * (1.0 + c.a.norm()));
        prop_assert!(min_eig(&c.a) >= -1e-12 * (1.0 + c.a.norm()));
        prop_assert!((&c.sigma * &c.sigma - &c.a).norm() <= 1e-10 * (1.0 + c.a.norm()));
    }

    #[test]
    fn backends_agree_in_dimension_one(x in -1.9f64..1.9, kappa in 0.2f64..3.0) {
        let closed = field(FitnessModel::band1d(kappa));
        let quad = field_with(FitnessModel::band1d(kappa), quad_backend());
        let (c, q) = (closed.eval(&[x]).unwrap(), quad.eval(&[x]).unwrap());
        let tol = |v: f64| 1e-7 * (1.0 + v.abs());
        prop_assert!((c.b[0] - q.b[0]).abs() <= tol(c.b[0]));
        prop_assert!((c.b_tilde[0] - q.b_tilde[0]).abs() <= tol(c.b_tilde[0]));
        prop_assert!((c.a[(0, 0)] - q.a[(0, 0)]).abs() <= tol(c.a[(0, 0)]));
    }

    #[test]
    fn drift_correction_is_linear_in_eps(x in -1.5f64..1.5, eps in 0.0f64..1.0) {
        let f = field(FitnessModel::quad1d());
        let c = f.eval(&[x]).unwrap();
        let be = f.b_eps(&[x], eps).unwrap();
        prop_assert!((be[0] - (c.b[0] + eps * c.b_tilde[0])).abs() <= 1e-15 * (1.0 + be[0].abs()));
    }
}
