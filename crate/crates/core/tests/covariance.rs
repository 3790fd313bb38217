use approx::assert_relative_eq;
use latblock::covariance::{exact_tau_n_sq, exact_tau_n_sq_window, Covariogram, ExactMethod, DEFAULT_REL_TOL};
use latblock::geometry::{lattice_sites, Region, Template};
use proptest::prelude::*;

fn cov(spec: &str) -> Covariogram {
    spec.parse().unwrap()
}

fn region(tpl: &str, a: f64, b: f64) -> Region {
    Region::unshifted(tpl.parse::<Template>().unwrap(), vec![a, b]).unwrap()
}

#[test]
fn tau_sq_decreases_in_each_range_parameter() {
    let betas = [0.2, 0.3, 0.5, 0.8, 1.0, 1.5, 2.0];
    for family in ["expsep", "gausssep"] {
        for &b2 in &betas {
            let mut prev = f64::INFINITY;
            for &b1 in &betas {
                let v = cov(&format!("{family}:b1={b1},b2={b2}")).tau_sq(DEFAULT_REL_TOL).unwrap();
                assert!(v < prev, "{family} b1={b1} b2={b2}: {v} >= {prev}");
                prev = v;
            }
        }
    }
}

#[test]
fn exact_variance_approaches_long_run_variance() {
    let c = cov("expsep:b1=1,b2=1");
    let tau = c.tau_sq(DEFAULT_REL_TOL).unwrap();
    let errs: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&n| (exact_tau_n_sq(&region("hypercube:d=2", n, n), &c).unwrap() - tau).abs())
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    assert!(errs[3] / tau < 0.05);
}

#[test]
fn white_noise_exact_variance_is_one() {
    let c = cov("white");
    for (tpl, a, b) in [("hypercube:d=2", 7.0, 9.0), ("circle", 12.0, 12.0)] {
        assert_eq!(exact_tau_n_sq(&region(tpl, a, b), &c).unwrap(), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lag_count_matches_pair_sum(
        shape in 0usize..3,
        a in 2.0f64..12.0,
        b in 2.0f64..12.0,
        b1 in 0.2f64..2.0,
        b2 in 0.2f64..2.0,
        gauss in any::<bool>(),
    ) {
        let tpl = ["hypercube:d=2", "circle", "hexagon"][shape];
        let r = region(tpl, a, b);
        let Ok(w) = lattice_sites(&r) else { return Ok(()) };
        let family = if gauss { "gausssep" } else { "expsep" };
        let c = cov(&format!("{family}:b1={b1},b2={b2}"));
        let lag = exact_tau_n_sq_window(&w, &c, ExactMethod::LagCount).unwrap();
        let pair = exact_tau_n_sq_window(&w, &c, ExactMethod::PairSum).unwrap();
        prop_assert!((lag - pair).abs() <= 1e-12 * pair.abs(), "{} vs {}", lag, pair);
    }

    #[test]
    fn separable_long_run_variance_factorizes(b1 in 0.2f64..3.0, b2 in 0.2f64..3.0) {
        let joint = cov(&format!("expsep:b1={b1},b2={b2}")).tau_sq(DEFAULT_REL_TOL).unwrap();
        // sum over k of exp(-b|k|) = (1 + e^-b) / (1 - e^-b)
        let axis = |b: f64| (1.0 + (-b).exp()) / (1.0 - (-b).exp());
        assert_relative_eq!(joint, axis(b1) * axis(b2), max_relative = 1e-9);
    }
}
