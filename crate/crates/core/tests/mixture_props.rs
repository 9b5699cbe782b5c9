use mpf_core::discrete_filter::{assemble_prediction_generator, correct, predict_raw, Integrator};
use mpf_core::dynamics::{likelihood, DiffusionModel, DiscreteObsModel, Sensor};
use mpf_core::families::*;
use mpf_core::field::gaussian_pdf;
use mpf_core::oracles::galerkin_prediction_generator;
use mpf_core::QuadratureSpec;
use proptest::collection::vec;
use proptest::prelude::*;

const LO: f64 = -15.0;
const HI: f64 = 15.0;
const N: usize = 30001;

fn riemann(f: impl Fn(f64) -> f64) -> f64 {
    let h = (HI - LO) / (N - 1) as f64;
    (0..N).map(|i| f(LO + h * i as f64)).sum::<f64>() * h
}

fn components() -> impl Strategy<Value = Vec<(f64, f64)>> {
    vec((-2.0..2.0f64, 0.2..1.5f64), 2..5)
}

/// Interior simplex point of dimension m, from m + 1 positive draws.
fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.05..1.0f64, m + 1).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w[..w.len() - 1].iter().map(|x| x / s).collect()
    })
}

fn family_and_theta() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>)> {
    components().prop_flat_map(|c| {
        let m = c.len() - 1;
        (Just(c), simplex(m))
    })
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    gaussian_pdf(a.0, b.0, a.1 + b.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_is_normalized_with_mixture_moments((comps, theta) in family_and_theta()) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let hat = extend_coords(&theta).unwrap();
        prop_assert!((hat.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let p = fam.density_hat(&hat);
        prop_assert!((riemann(|x| p.eval1(x)) - 1.0).abs() < 1e-9);
        let mean: f64 = hat.iter().zip(&comps).map(|(w, c)| w * c.0).sum();
        let second: f64 = hat.iter().zip(&comps).map(|(w, c)| w * (c.1 + c.0 * c.0)).sum();
        let (m, v) = fam.moments(&hat);
        prop_assert!((m - mean).abs() < 1e-9);
        prop_assert!((v - (second - mean * mean)).abs() < 1e-9);
    }

    #[test]
    fn metric_matches_closed_form_overlaps(comps in components()) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let m = comps.len() - 1;
        let last = comps[m];
        for i in 0..m {
            for j in 0..m {
                let want = overlap(comps[i], comps[j]) - overlap(comps[i], last) - overlap(comps[j], last)
                    + overlap(last, last);
                let got = fam.metric().get(i, j);
                prop_assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "({i},{j}) {got} vs {want}");
            }
        }
    }

    #[test]
    fn fitting_a_member_recovers_its_weights((comps, theta) in family_and_theta()) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let hat = extend_coords(&theta).unwrap();
        let target = comps.clone();
        let fit = fam.fit_density(move |x| target.iter().zip(&hat).map(|(c, w)| w * gaussian_pdf(x, c.0, c.1)).sum());
        for (a, b) in fit.iter().zip(&theta) {
            prop_assert!((a - b).abs() < 1e-6, "{fit:?} vs {theta:?}");
        }
    }

    #[test]
    fn clipping_lands_inside_the_simplex(theta in vec(-0.5..1.5f64, 1..5)) {
        let mut th = theta.clone();
        match clip_to_simplex(&mut th) {
            Ok(_) => {
                prop_assert!(th.iter().all(|&x| x >= 1e-10 - 1e-15));
                prop_assert!(th.iter().sum::<f64>() <= 1.0 - 1e-10 + 1e-15);
            }
            // large excursions are manifold exits, not clips
            Err(_) => prop_assert!(theta.iter().any(|&x| x < -1e-6) || theta.iter().sum::<f64>() > 1.0 + 1e-6),
        }
    }

    #[test]
    fn correction_is_pointwise_bayes(
        (comps, theta) in family_and_theta(),
        (z, r, slope) in (-2.0..2.0f64, 0.2..2.0f64, prop_oneof![Just(1.0), Just(-0.5), Just(2.0)]),
    ) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let obs = DiscreteObsModel::new(Sensor::polynomial(&[0.1, slope]), r, vec![1.0]).unwrap();
        let prior = MixtureCoords::new(theta).unwrap();
        let c = correct(&prior, &fam, z, &obs, 1.0, WeightRule::Reweighted).unwrap();
        let p = fam.density(&prior).unwrap();
        let lik = |x: f64| (-(z - 0.1 - slope * x).powi(2) / (2.0 * r)).exp();
        let norm = riemann(|x| p.eval1(x) * lik(x));
        let post = c.family.density(&c.theta).unwrap();
        let d2 = riemann(|x| (post.eval1(x) - p.eval1(x) * lik(x) / norm).powi(2));
        prop_assert!(d2.sqrt() < 1e-8, "L2 gap {}", d2.sqrt());
    }

    #[test]
    fn conjugate_and_generic_updates_agree(comps in components(), z in -2.0..2.0f64) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let obs = DiscreteObsModel::new(Sensor::identity(), 0.5, vec![1.0]).unwrap();
        let psi = likelihood(z, &obs, 1.0);
        let a = bayes_update_basis_with(&fam, &psi, false).unwrap();
        let b = bayes_update_basis_with(&fam, &psi, true).unwrap();
        for (i, comp) in comps.iter().enumerate() {
            let mass = riemann(|x| gaussian_pdf(x, comp.0, comp.1) * psi.eval(x));
            prop_assert!((a.c[i] * mass - 1.0).abs() < 1e-9);
            prop_assert!((a.log_c[i] - b.log_c[i]).abs() < 1e-7);
            let (qa, qb) = (&a.family.components()[i], &b.family.components()[i]);
            for x in [-1.5, -0.3, 0.0, 0.7, 2.0] {
                prop_assert!((qa.eval(x) - qb.eval(x)).abs() < 1e-7 * (1.0 + qa.eval(x)));
            }
        }
    }

    #[test]
    fn projection_and_galerkin_generators_agree(comps in components(), model in prop_oneof![
        Just(DiffusionModel::bimodal_drift(1.0)),
        Just(DiffusionModel::linear_ou(0.7, 0.5)),
        Just(DiffusionModel::heat(1.3)),
    ]) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let b = assemble_prediction_generator(&fam, &model, 0.0).unwrap().b;
        let g = galerkin_prediction_generator(&fam, &model, 0.0, &QuadratureSpec::grid(-12.0, 12.0, 6001)).unwrap();
        let scale = b.max_abs().max(1.0);
        prop_assert!(b.sub(&g).max_abs() < 1e-8 * scale, "{}", b.sub(&g).max_abs());
    }

    #[test]
    fn exact_and_rk4_predictions_agree((comps, theta) in family_and_theta(), dt in 0.01..0.2f64) {
        let fam = MixtureFamily::gaussian(&comps, QuadratureSpec::default()).unwrap();
        let gen = assemble_prediction_generator(&fam, &DiffusionModel::bimodal_drift(0.8), 0.0).unwrap();
        let a = predict_raw(&theta, &gen, dt, Integrator::Exact).unwrap();
        let b = predict_raw(&theta, &gen, dt, Integrator::Rk4 { delta_fraction: 1e-2 }).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}
