#![allow(clippy::needless_range_loop)]

use mpf_core::field::{gaussian_field, gaussian_pdf, ScalarField};
use mpf_core::geometry::*;
use mpf_core::linalg::symmetric_eigenvalues;
use mpf_core::{Hint, QuadratureSpec};
use proptest::prelude::*;

/// Plain Riemann sum over mu +- 14 sd.
fn riemann(mu: f64, v: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, n) = (mu - 14.0 * v.sqrt(), mu + 14.0 * v.sqrt(), 20001);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| f(lo + h * i as f64)).sum::<f64>() * h
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

fn assert_close(g: &MetricMatrix, want: [[f64; 2]; 2], tol: f64) {
    let scale = want.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..2 {
        for j in 0..2 {
            assert!(rel(g.get(i, j), want[i][j], scale) < tol, "({i},{j}): {} vs {}", g.get(i, j), want[i][j]);
        }
    }
}

fn brute_metric(mu: f64, v: f64, t: [&dyn Fn(f64) -> f64; 2], fisher: bool) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = riemann(mu, v, |x| {
                let w = if fisher { 1.0 / gaussian_pdf(x, mu, v) } else { 1.0 };
                t[i](x) * t[j](x) * w
            });
        }
    }
    out
}

fn canonical_point() -> impl Strategy<Value = (f64, f64)> {
    (-2.0..2.0f64, -2.0..-0.1f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_forms_match_brute_force((t1, t2) in canonical_point()) {
        let (mu, v) = canonical_to_moments(t1, t2);
        let p = move |x: f64| gaussian_pdf(x, mu, v);
        let d_t1 = move |x: f64| (x - mu) * p(x);
        let d_t2 = move |x: f64| (x * x - v - mu * mu) * p(x);
        let d_mu = move |x: f64| (x - mu) / v * p(x);
        let d_v = move |x: f64| ((x - mu) * (x - mu) / (2.0 * v * v) - 0.5 / v) * p(x);
        assert_close(&gaussian_fisher_canonical(t1, t2).unwrap(), brute_metric(mu, v, [&d_t1, &d_t2], true), 1e-6);
        assert_close(&gaussian_l2_canonical(t1, t2).unwrap(), brute_metric(mu, v, [&d_t1, &d_t2], false), 1e-6);
        assert_close(&gaussian_fisher_expectation(mu, v).unwrap(), brute_metric(mu, v, [&d_mu, &d_v], true), 1e-6);
        assert_close(&gaussian_l2_expectation(mu, v).unwrap(), brute_metric(mu, v, [&d_mu, &d_v], false), 1e-6);
    }

    #[test]
    fn metrics_pull_back_between_charts((t1, t2) in canonical_point()) {
        let (mu, v) = canonical_to_moments(t1, t2);
        let j = canonical_jacobian_wrt_moments(mu, v);
        let fisher = change_coordinates_metric(&gaussian_fisher_canonical(t1, t2).unwrap(), &j, "e").unwrap();
        let l2 = change_coordinates_metric(&gaussian_l2_canonical(t1, t2).unwrap(), &j, "e").unwrap();
        let want = |g: MetricMatrix| [[g.get(0, 0), g.get(0, 1)], [g.get(1, 0), g.get(1, 1)]];
        assert_close(&fisher, want(gaussian_fisher_expectation(mu, v).unwrap()), 1e-10);
        assert_close(&l2, want(gaussian_l2_expectation(mu, v).unwrap()), 1e-10);
    }

    #[test]
    fn quadrature_metrics_are_spd((mu, v) in (-3.0..3.0f64, 0.05..4.0f64)) {
        let spec = QuadratureSpec::gauss_hermite_at(mu, v.sqrt(), 64);
        let fam = ParametricFamily::gaussian_expectation();
        for g in [fisher_metric(&fam, &[mu, v], &spec).unwrap(), l2_metric(&fam, &[mu, v], &spec).unwrap()] {
            prop_assert!(g.matrix().asymmetry() < 1e-12);
            prop_assert!(symmetric_eigenvalues(g.matrix()).iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn l2_projection_solves_normal_equations(
        (mu, v) in (-1.0..1.0f64, 0.3..2.0f64),
        (a, b, c, s) in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.5..3.0f64),
    ) {
        // v(x) = (a + b x + c x^2) N(x; 0, s)
        let field = ScalarField::new_1d(Hint::scalar(0.0, s.sqrt()), move |x| (a + b * x + c * x * x) * gaussian_pdf(x, 0.0, s));
        let spec = QuadratureSpec::grid(-30.0, 30.0, 6001);
        let got = project_l2(&field, &ParametricFamily::gaussian_expectation(), &[mu, v], &spec).unwrap();
        let p = move |x: f64| gaussian_pdf(x, mu, v);
        let t: [Box<dyn Fn(f64) -> f64>; 2] = [
            Box::new(move |x: f64| (x - mu) / v * p(x)),
            Box::new(move |x: f64| ((x - mu) * (x - mu) / (2.0 * v * v) - 0.5 / v) * p(x)),
        ];
        let lo = mu.min(0.0) - 14.0 * v.max(s).sqrt();
        let hi = mu.max(0.0) + 14.0 * v.max(s).sqrt();
        let n = 40001;
        let h = (hi - lo) / (n - 1) as f64;
        let int = |f: &dyn Fn(f64) -> f64| (0..n).map(|i| f(lo + h * i as f64)).sum::<f64>() * h;
        let gram: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| int(&|x| t[i](x) * t[j](x))).collect()).collect();
        let rhs: Vec<f64> = (0..2).map(|i| int(&|x| t[i](x) * field.eval1(x))).collect();
        let want = solve(gram.clone(), rhs.clone());
        let scale = want.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
        for i in 0..2 {
            prop_assert!(rel(got[i], want[i], scale) < 1e-6, "{got:?} vs {want:?}");
        }
        // the residual is orthogonal to the tangent space
        for i in 0..2 {
            let r = int(&|x| (field.eval1(x) - want[0] * t[0](x) - want[1] * t[1](x)) * t[i](x));
            prop_assert!(r.abs() < 1e-8 * rhs.iter().fold(1.0f64, |m, x| m.max(x.abs())));
        }
    }

    #[test]
    fn kl_matches_gaussian_closed_form(
        (m1, v1) in (-2.0..2.0f64, 0.2..3.0f64),
        (m2, v2) in (-2.0..2.0f64, 0.2..3.0f64),
    ) {
        let spec = QuadratureSpec::grid(-14.0, 14.0, 12001);
        let k = kl_divergence(&gaussian_field(m1, v1), &gaussian_field(m2, v2), &spec).unwrap();
        let want = 0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
        prop_assert!(k >= -1e-12);
        prop_assert!((k - want).abs() < 1e-7 * want.max(1.0), "{k} vs {want}");
    }
}

#[test]
fn kl_remainder_is_cubic_along_a_ray() {
    let fam = ParametricFamily::gaussian_expectation();
    let spec = QuadratureSpec::grid(-20.0, 20.0, 8001);
    let dir = [0.6, -0.8];
    let ratios: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let d = [dir[0] * h, dir[1] * h];
            kl_quadratic_remainder(&fam, &[0.0, 1.0], &d, &spec).unwrap().abs() / (h * h * h)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(lo > 0.0 && hi / lo < 3.0, "{ratios:?}");
}
