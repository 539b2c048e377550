use nbfit_core::dist::{CountLaw, NBParams};
use nbfit_core::limits::{diff_profile, log_grid, G_lambda, G_lambda_resolved, G_of, G_of_psi, TabulatedLaw, DEFAULT_TOL};
use proptest::prelude::*;

#[test]
fn poisson_limit_positive_on_grid() {
    for &lambda in &[1.0, 3.0, 5.0, 10.0] {
        for nu in log_grid(1e-2, 1e6, 40) {
            let g = G_lambda_resolved(lambda, nu).unwrap();
            assert!(g > 0.0, "lambda {lambda} nu {nu}: {g}");
        }
    }
}

#[test]
fn difference_profile_on_grid() {
    for &lambda in &[1.0, 3.0, 5.0, 10.0] {
        for nu in log_grid(1e-2, 1e6, 40) {
            let p = diff_profile(lambda, nu, DEFAULT_TOL).unwrap();
            assert!(p.k1 < p.k_star && p.k_star < p.k2);
            assert!(p.sum_d().abs() <= 1e-8, "lambda {lambda} nu {nu}: {}", p.sum_d());
            assert!(p.weighted_sum() > 0.0);
        }
    }
}

#[test]
fn tabulated_matches_closed_form() {
    let nb = CountLaw::Nb(NBParams::new(3.0, 0.6).unwrap());
    let top = nb.upper_quantile(1e-17);
    let table = TabulatedLaw::new((0..=top).map(|y| nb.pmf(y)).collect()).unwrap();
    for nu in [0.5, 3.0, 20.0] {
        let a = G_of(&nb, nu, 1e-13).unwrap();
        let b = G_of(&table, nu, 1e-13).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn vanishes_at_own_size(nu in 0.1f64..100.0, p in 0.05f64..0.95) {
        let law = CountLaw::Nb(NBParams::new(nu, p).unwrap());
        prop_assert!(G_of(&law, nu, 1e-12).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn two_routes_agree(lambda in 0.5f64..15.0, nu in 0.05f64..200.0) {
        let a = G_lambda(lambda, nu, 1e-13).unwrap();
        let law = CountLaw::Poisson(nbfit_core::dist::PoissonParams::new(lambda).unwrap());
        let b = G_of_psi(&law, nu, 1e-13).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}
