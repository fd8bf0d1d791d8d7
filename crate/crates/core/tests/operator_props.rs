use curvarb::mincurv::f_operator_checked;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn symmetric(n: usize, raw: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (raw[i * n + j] + raw[j * n + i]);
        }
    }
    m
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=4).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0..2.0f64, n).prop_filter("nonzero gradient", |p| {
                p.iter().map(|v| v * v).sum::<f64>() > 1e-4
            }),
            prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |raw| symmetric(n, &raw)),
        )
    })
}

fn eigen_range(n: usize, m: &[f64]) -> (f64, f64) {
    let e = SymmetricEigen::new(DMatrix::from_row_slice(n, n, m)).eigenvalues;
    (e.min(), e.max())
}

/// Least `-q^T M q / 2` over random unit `q` orthogonal to `p`.
fn monte_carlo(p: &[f64], m: &[f64], draws: usize, seed: u64) -> f64 {
    let n = p.len();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..draws {
        let mut q: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let qp: f64 = q.iter().zip(p).map(|(a, b)| a * b).sum();
        q.iter_mut().zip(p).for_each(|(a, b)| *a -= qp / pp * b);
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += q[i] * m[i * n + j] * q[j];
            }
        }
        best = best.min(-0.5 * quad / (norm * norm));
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shift_by_identity((p, m) in instance(), c in -5.0..5.0f64) {
        let n = p.len();
        let mut shifted = m.clone();
        (0..n).for_each(|i| shifted[i * n + i] += c);
        let a = f_operator_checked(&p, &m).unwrap();
        let b = f_operator_checked(&p, &shifted).unwrap();
        prop_assert!((b - (a - c / 2.0)).abs() < 1e-12 * (1.0 + a.abs() + c.abs()));
    }

    #[test]
    fn gradient_scale_invariance((p, m) in instance(), s in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64]) {
        let scaled: Vec<f64> = p.iter().map(|v| v * s).collect();
        let a = f_operator_checked(&p, &m).unwrap();
        let b = f_operator_checked(&scaled, &m).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn geometric_scaling((p, m) in instance(), s in 0.1..10.0f64, mu in -5.0..5.0f64) {
        let n = p.len();
        let mut moved: Vec<f64> = m.iter().map(|v| v * s).collect();
        for i in 0..n {
            for j in 0..n {
                moved[i * n + j] += mu * p[i] * p[j];
            }
        }
        let scaled: Vec<f64> = p.iter().map(|v| v * s).collect();
        let a = f_operator_checked(&p, &m).unwrap();
        let b = f_operator_checked(&scaled, &moved).unwrap();
        prop_assert!((b - s * a).abs() < 1e-10 * (1.0 + s * a.abs()));
    }

    #[test]
    fn degenerate_ellipticity((p, m) in instance(), raw in prop::collection::vec(-1.0..1.0f64, 16)) {
        let n = p.len();
        // m + a a^T dominates m
        let a = &raw[..n];
        let mut bigger = m.clone();
        for i in 0..n {
            for j in 0..n {
                bigger[i * n + j] += a[i] * a[j];
            }
        }
        let lo = f_operator_checked(&p, &m).unwrap();
        let hi = f_operator_checked(&p, &bigger).unwrap();
        prop_assert!(lo >= hi - 1e-12);
    }

    #[test]
    fn eigenvalue_sandwich((p, m) in instance()) {
        let (lmin, lmax) = eigen_range(p.len(), &m);
        let f = f_operator_checked(&p, &m).unwrap();
        prop_assert!(f >= -0.5 * lmax - 1e-12 && f <= -0.5 * lmin + 1e-12);
    }

    #[test]
    fn planar_closed_form(p in prop::collection::vec(-2.0..2.0f64, 2), raw in prop::collection::vec(-3.0..3.0f64, 4)) {
        prop_assume!(p[0].abs() + p[1].abs() > 1e-3);
        let m = symmetric(2, &raw);
        let q = [-p[1], p[0]];
        let pp = p[0] * p[0] + p[1] * p[1];
        let expected = -0.5 * (q[0] * q[0] * m[0] + 2.0 * q[0] * q[1] * m[1] + q[1] * q[1] * m[3]) / pp;
        let f = f_operator_checked(&p, &m).unwrap();
        prop_assert!((f - expected).abs() < 1e-12 * (1.0 + expected.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matches_extreme_point_oracle((p, m) in instance(), seed in any::<u64>()) {
        let f = f_operator_checked(&p, &m).unwrap();
        let oracle = monte_carlo(&p, &m, 100_000, seed);
        // the oracle only ever overestimates the infimum, up to projection roundoff
        prop_assert!(oracle >= f - 1e-9);
        prop_assert!(oracle - f < 1e-3, "dim {} closed form {f} oracle {oracle}", p.len());
    }
}

#[test]
fn zero_gradient_uses_whole_space() {
    let m = [1.0, 0.5, 0.0, 0.5, -2.0, 0.3, 0.0, 0.3, 4.0];
    let (_, lmax) = eigen_range(3, &m);
    let f = f_operator_checked(&[0.0; 3], &m).unwrap();
    assert!((f + 0.5 * lmax).abs() < 1e-12);
}
