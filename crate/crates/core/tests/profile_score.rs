use nbfit_core::apma::{fit_nb, grid_oracle, moment_init, FitConfig};
use nbfit_core::dist::{CountLaw, NBParams, PoissonParams};
use nbfit_core::rng::stream;
use nbfit_core::sample::CountSample;
use nbfit_core::score::{ScoreContext, ScoreForm};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn nb_sample(nu: f64, p: f64, n: usize, seed: u64) -> Vec<u64> {
    let law = CountLaw::Nb(NBParams::new(nu, p).unwrap());
    law.sample(n, &mut stream(seed, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forms_agree(nu in 0.05f64..50.0, p in 0.05f64..0.95, n in 5usize..300, seed in any::<u64>(), v in 1e-3f64..1e5) {
        let s = CountSample::from_counts(&nb_sample(nu, p, n, seed)).unwrap();
        prop_assume!(!s.is_all_zero());
        let a = ScoreContext::with_form(&s, ScoreForm::Freq).unwrap();
        let b = ScoreContext::with_form(&s, ScoreForm::Psi).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
        prop_assert!(close(a.profile_loglik(v).unwrap(), b.profile_loglik(v).unwrap()));
        prop_assert!(close(a.score_g(v).unwrap(), b.score_g(v).unwrap()));
        prop_assert!(close(a.score_g_prime(v).unwrap(), b.score_g_prime(v).unwrap()));
    }

    #[test]
    fn score_is_scaled_derivative(nu in 0.1f64..20.0, p in 0.1f64..0.9, seed in any::<u64>(), v in 0.05f64..200.0) {
        let s = CountSample::from_counts(&nb_sample(nu, p, 150, seed)).unwrap();
        prop_assume!(!s.is_all_zero());
        let c = ScoreContext::new(&s, 0.1).unwrap();
        let h = 1e-5 * v;
        let n = s.n() as f64;
        let fd = (c.profile_loglik(v + h).unwrap() - c.profile_loglik(v - h).unwrap()) / (2.0 * h * n);
        let g = c.score_g(v).unwrap();
        prop_assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3 / v));
        let fd2 = (c.score_g(v + h).unwrap() - c.score_g(v - h).unwrap()) / (2.0 * h);
        let gp = c.score_g_prime(v).unwrap();
        prop_assert!((fd2 - gp).abs() <= 1e-5 * gp.abs().max(1e-3 / (v * v)));
    }

    #[test]
    fn small_size_limits(nu in 0.1f64..20.0, p in 0.1f64..0.9, n in 10usize..300, seed in any::<u64>()) {
        let s = CountSample::from_counts(&nb_sample(nu, p, n, seed)).unwrap();
        prop_assume!(!s.is_all_zero());
        let c = ScoreContext::new(&s, 0.1).unwrap();
        let f0 = s.zero_count() as f64 / s.n() as f64;
        let v = 1e-9;
        prop_assert!((v * c.score_g(v).unwrap() - (1.0 - f0)).abs() < 1e-4);
        prop_assert!((v * v * c.score_g_prime(v).unwrap() - (f0 - 1.0)).abs() < 1e-4);
    }

    #[test]
    fn permutation_invariance(seed in any::<u64>()) {
        let mut xs = nb_sample(1.5, 0.3, 120, seed);
        let a = fit_nb(&CountSample::from_counts(&xs).unwrap(), &FitConfig::default()).unwrap();
        xs.shuffle(&mut stream(seed, 1));
        let b = fit_nb(&CountSample::from_counts(&xs).unwrap(), &FitConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sign_dichotomy(lambda in 0.5f64..20.0, n in 10usize..400, seed in any::<u64>()) {
        let law = CountLaw::Poisson(PoissonParams::new(lambda).unwrap());
        let s = CountSample::from_counts(&law.sample(n, &mut stream(seed, 0))).unwrap();
        prop_assume!(!s.is_all_zero());
        let cfg = FitConfig::default();
        let fit = fit_nb(&s, &cfg).unwrap();
        if s.var_biased() <= s.mean() {
            prop_assert!(fit.at_boundary);
            let c = ScoreContext::new(&s, 0.1).unwrap();
            for v in [0.01, 1.0, 100.0, 5000.0] {
                prop_assert!(c.score_g(v).unwrap() > 0.0);
            }
        } else if moment_init(&s, &cfg) < 100.0 {
            prop_assert!(!fit.at_boundary);
        }
    }

    #[test]
    fn matches_grid_oracle(nu in 0.05f64..50.0, p in 0.02f64..0.98, n in 20usize..500, seed in any::<u64>()) {
        let s = CountSample::from_counts(&nb_sample(nu, p, n, seed)).unwrap();
        prop_assume!(!s.is_all_zero());
        let cfg = FitConfig::default();
        let fit = fit_nb(&s, &cfg).unwrap();
        let (_, h_oracle) = grid_oracle(&s, &cfg, 2000);
        prop_assert!((h_oracle - fit.loglik).exp() <= 1.0 + 1e-6);
    }
}
