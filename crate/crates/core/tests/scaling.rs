use approx::assert_relative_eq;
use latblock::constants::k0;
use latblock::estimators::{FieldSample, SmoothStatistic};
use latblock::fieldsim::{build_generator, sample_field, substream, Method};
use latblock::geometry::{lattice_sites, Region, Scheme, Template};
use latblock::harness::with_threads;
use latblock::scaling::{
    default_candidates, hj_recalibrate, hj_scaling, npi_bias, npi_from_curve, npi_scaling, theoretical_scaling,
    Diagnostics,
};
use latblock::Error;
use proptest::prelude::*;

fn t(spec: &str) -> Template {
    spec.parse().unwrap()
}

fn field(region: &Region, cov: &str, seed: u64) -> FieldSample {
    let window = lattice_sites(region).unwrap();
    let g = build_generator(&cov.parse().unwrap(), &window, Method::Auto).unwrap();
    sample_field(&g, &mut substream(seed, 0))
}

#[test]
fn npi_bias_recovers_a_hyperbolic_curve() {
    let curve = |s: f64| 3.0 - 5.0 / s;
    assert_relative_eq!(npi_bias(curve(2.0), curve(4.0), 2.0), 5.0, max_relative = 1e-15);
}

#[test]
fn hj_is_deterministic_across_thread_counts() {
    let region = Region::unshifted(t("hypercube:d=2"), vec![20.0, 24.0]).unwrap();
    let sample = field(&region, "expsep:b1=0.5,b2=0.3", 7);
    let run = |threads| {
        with_threads(Some(threads), || {
            hj_scaling(&sample, &region, SmoothStatistic::Mean, 8.0, &default_candidates(8.0), Scheme::Ol)
        })
        .unwrap()
        .unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(2));
}

#[test]
fn hj_ties_and_rejections() {
    let region = Region::unshifted(t("hypercube:d=2"), vec![20.0, 20.0]).unwrap();
    let sample = field(&region, "expsep:b1=1,b2=1", 1);
    let hj = |lm: f64, c: &[f64]| hj_scaling(&sample, &region, SmoothStatistic::Mean, lm, c, Scheme::Ol);
    assert!(matches!(hj(6.0, &[2.0, 3.0, 4.0, 5.0]), Err(Error::InsufficientCandidates { got: 4, .. })));
    // duplicates do not count twice
    assert!(matches!(
        hj(8.0, &[2.0, 3.0, 3.0, 4.0, 5.0]),
        Err(Error::InsufficientCandidates { got: 4, .. })
    ));
    assert!(matches!(hj(6.0, &[1.0, 2.0, 3.0, 4.0, 6.0]), Err(Error::InvalidParameter(_))));
    assert!(matches!(hj(20.0, &default_candidates(20.0)), Err(Error::InvalidParameter(_))));
    let plan = hj(9.0, &[6.0, 2.0, 5.0, 3.0, 4.0, 7.0, 8.0]).unwrap();
    let Diagnostics::Hj { candidates, mse, argmin, .. } = &plan.diagnostics else { unreachable!() };
    assert_eq!(candidates, &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let best = mse.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let first = candidates[mse.iter().position(|m| *m == Some(best)).unwrap()];
    assert_eq!(*argmin, first);
    assert!((1..=19).contains(&plan.lambda_opt_int));
}

#[test]
fn npi_integer_estimate_is_clamped() {
    let region = Region::unshifted(t("hypercube:d=2"), vec![14.0, 18.0]).unwrap();
    let sample = field(&region, "expsep:b1=0.5,b2=0.3", 2);
    let plan = npi_scaling(&sample, &region, SmoothStatistic::Mean, 0.5, 0.5, Scheme::Ol).unwrap();
    assert!((1..=13).contains(&plan.lambda_opt_int));
    // pilots are 2 and 1: tiny variance at s = 2, large bias between 1 and 2
    let huge = npi_from_curve(&region, 0.5, 0.5, Scheme::Ol, |s| Ok(1e-3 + 2.0 / s - 1.0)).unwrap();
    assert!(huge.lambda_opt_real > 100.0);
    assert_eq!(huge.lambda_opt_int, 13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ratio_law(
        shape in prop::sample::select(vec!["hypercube:d=1", "hypercube:d=2", "circle", "rtriangle", "sphere"]),
        det in 1.0f64..1e5,
        b0 in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        tau2 in 0.01f64..100.0,
    ) {
        let tpl = t(shape);
        let c = k0(&tpl).unwrap();
        let d = tpl.dim();
        let ol = theoretical_scaling(d, det, b0, tau2, &c, Scheme::Ol).unwrap();
        let nol = theoretical_scaling(d, det, b0, tau2, &c, Scheme::Nol).unwrap();
        let want = c.k1.powf(-1.0 / (d as f64 + 2.0));
        prop_assert!((ol.lambda_opt_real / nol.lambda_opt_real - want).abs() <= 1e-12 * want);
        prop_assert!(ol.lambda_opt_int >= 1 && nol.lambda_opt_int >= 1);
    }

    #[test]
    fn homogeneity(
        det in 1.0f64..1e4,
        m in 1.01f64..1e3,
        b0 in 0.01f64..50.0,
        tau2 in 0.01f64..100.0,
        d in 1usize..4,
    ) {
        let c = k0(&t(&format!("hypercube:d={d}"))).unwrap();
        let base = theoretical_scaling(d, det, b0, tau2, &c, Scheme::Ol).unwrap().lambda_opt_real;
        let big = theoretical_scaling(d, det * m, b0, tau2, &c, Scheme::Ol).unwrap().lambda_opt_real;
        let want = base * m.powf(1.0 / (d as f64 + 2.0));
        prop_assert!((big - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn npi_exact_on_hyperbolic_curves(
        a in 10.0f64..60.0,
        b in 10.0f64..60.0,
        c1 in prop::sample::select(vec![0.25, 0.5, 1.0, 2.0]),
        c2 in prop::sample::select(vec![0.25, 0.5, 1.0, 2.0]),
        frac in 0.01f64..0.95,
        tau2 in 0.5f64..20.0,
    ) {
        // b0 < tau2 keeps the curve positive at every scale >= 1
        let b0 = frac * tau2;
        let region = Region::unshifted(t("hypercube:d=2"), vec![a, b]).unwrap();
        let plan = npi_from_curve(&region, c1, c2, Scheme::Ol, |s| Ok(tau2 - b0 / s)).unwrap();
        let Diagnostics::Npi { b0_hat, .. } = plan.diagnostics else { unreachable!() };
        prop_assert!((b0_hat - b0).abs() <= 1e-12 * b0 * 64.0, "{} vs {}", b0_hat, b0);
    }

    #[test]
    fn hj_recalibration_is_monotone(
        argmin in 1.0f64..20.0,
        ratio in 1.0f64..1e4,
        grow in 1.001f64..10.0,
        d in 1usize..4,
    ) {
        prop_assert!(hj_recalibrate(argmin, ratio * grow, d) > hj_recalibrate(argmin, ratio, d));
        prop_assert!(hj_recalibrate(argmin, ratio, d) >= argmin);
    }
}
