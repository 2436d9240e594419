use deposition::measures::{
    check_dominance, coupled_pair, cov_with_omega, density_of_theta, seed, stationary, theta_of_density, tilted,
    DEFAULT_TAIL_TOL,
};
use deposition::rates::{validate, RateProfile, RateSpec};
use proptest::prelude::*;

fn models() -> Vec<(RateSpec, f64, f64)> {
    // (spec, lowest density, highest density) for sampling
    vec![
        (RateSpec::asep(0.8).unwrap(), 0.02, 0.98),
        (RateSpec::particle_antiparticle(0.7, 0.3, 1.0).unwrap(), -0.9, 0.9),
        (RateSpec::zero_range_constant(1.0).unwrap(), 0.05, 6.0),
        (RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap(), 0.05, 4.0),
        (RateSpec::zero_range(0.6, RateProfile::Linear { slope: 1.0 }).unwrap(), 0.05, 6.0),
        (
            RateSpec::bricklayers(0.9, RateProfile::Power { base: std::f64::consts::E }, Some(1e6)).unwrap(),
            -3.0,
            3.0,
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_round_trip(k in 0usize..6, u in 0.0f64..1.0) {
        let (spec, lo, hi) = &models()[k];
        let rho = lo + u * (hi - lo);
        let (theta, mu) = theta_of_density(spec, rho).unwrap();
        prop_assert!((mu.mean() - rho).abs() < 1e-10);
        prop_assert!((density_of_theta(spec, theta).unwrap() - rho).abs() < 1e-10);
    }

    #[test]
    fn stationary_laws_increase_with_density(k in 0usize..6, u in 0.0f64..1.0, w in 0.0f64..1.0) {
        let (spec, lo, hi) = &models()[k];
        let a = lo + u.min(w) * (hi - lo);
        let b = lo + u.max(w) * (hi - lo);
        prop_assume!(b > a + 1e-6);
        let (ma, mb) = (stationary(spec, a).unwrap(), stationary(spec, b).unwrap());
        prop_assert!(check_dominance(&ma, &mb).is_ok());
        let (sa, sb) = (seed(&ma).unwrap(), seed(&mb).unwrap());
        prop_assert!(check_dominance(&sa, &sb).is_ok());
        for j in 0..50 {
            let (y, z) = coupled_pair(&ma, &mb, (j as f64 + 0.5) / 50.0);
            prop_assert!(y <= z);
        }
    }

    #[test]
    fn seed_law_is_a_probability_with_decreasing_upper_tail(k in 0usize..6, u in 0.0f64..1.0) {
        let (spec, lo, hi) = &models()[k];
        let rho = lo + u * (hi - lo);
        let mu = stationary(spec, rho).unwrap();
        let s = seed(&mu).unwrap();
        prop_assert!(s.pmf().iter().all(|p| *p >= 0.0));
        prop_assert!((s.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let first = (rho.ceil() as i64).max(s.lo());
        for y in first..s.hi() {
            prop_assert!(s.prob(y + 1) <= s.prob(y) + 1e-15);
        }
        if let Some(m) = spec.space.omega_max {
            prop_assert_eq!(s.prob(m), 0.0);
        }
    }

    #[test]
    fn covariance_is_the_tilt_derivative(k in 0usize..6, u in 0.1f64..0.9) {
        let (spec, lo, hi) = &models()[k];
        let rho = lo + u * (hi - lo);
        let (theta, mu) = theta_of_density(spec, rho).unwrap();
        let h = 1e-4;
        let (up, down) = (tilted(spec, theta + h, DEFAULT_TAIL_TOL).unwrap(), tilted(spec, theta - h, DEFAULT_TAIL_TOL).unwrap());
        let phi = |z: i64| spec.f(z).min(1e3);
        let fd = (up.expect(phi) - down.expect(phi)) / (2.0 * h);
        let cov = cov_with_omega(&mu, phi);
        prop_assert!((fd - cov).abs() <= 1e-6 * cov.abs().max(1e-3), "fd {} cov {}", fd, cov);
    }
}

#[test]
fn builtins_satisfy_the_structural_conditions() {
    for (spec, _, _) in models() {
        let report = validate(&spec, 8);
        assert!(report.is_valid(), "{}: {:?}", spec.name, report.violations);
    }
}

#[test]
fn factorized_rates_match_direct_rates() {
    for (spec, _, _) in models() {
        for y in -4..=4i64 {
            for z in -4..=4i64 {
                if spec.space.contains(y) && spec.space.contains(z) && spec.space.contains(z + 1) {
                    let direct = spec.p(y, z);
                    let factored = spec.s_p(y, z + 1) * spec.f(y);
                    assert!((direct - factored).abs() <= 1e-12 * direct.abs().max(1.0), "{} at ({y},{z})", spec.name);
                }
            }
        }
    }
}
