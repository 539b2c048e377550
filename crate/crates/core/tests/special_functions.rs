use nbfit_core::special::{digamma_diff, digamma_inv, lgamma, ln_gamma_ratio, psi, psi1, trigamma_diff};
use proptest::prelude::*;

const EULER: f64 = 0.577_215_664_901_532_9;

#[test]
fn reference_values() {
    assert!((psi(1.0) + EULER).abs() < 1e-14);
    assert!((psi1(1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
    assert!((lgamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    assert!((psi(0.5) + EULER + 2.0 * std::f64::consts::LN_2).abs() < 1e-13);
    assert!((psi1(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12);
    // ln 170! from the exact factorial product
    let exact: f64 = (1..=170).map(|k| (k as f64).ln()).sum();
    assert!((lgamma(171.0) - exact).abs() < 1e-10 * exact);
}

proptest! {
    #[test]
    fn recurrences(x in 1e-3f64..1e4) {
        let lg = lgamma(x + 1.0) - lgamma(x) - x.ln();
        prop_assert!(lg.abs() <= 1e-12 * (1.0 + lgamma(x).abs()));
        let d = psi(x + 1.0) - psi(x) - 1.0 / x;
        prop_assert!(d.abs() <= 1e-12 * (1.0 + 1.0 / x));
        let t = psi1(x + 1.0) - psi1(x) + 1.0 / (x * x);
        prop_assert!(t.abs() <= 1e-11 * (1.0 + 1.0 / (x * x)));
    }

    #[test]
    fn derivatives_by_central_difference(x in 0.5f64..500.0) {
        let h = 1e-5 * x;
        let dl = (lgamma(x + h) - lgamma(x - h)) / (2.0 * h);
        prop_assert!((dl - psi(x)).abs() <= 1e-6 * (1.0 + psi(x).abs()));
        let dp = (psi(x + h) - psi(x - h)) / (2.0 * h);
        prop_assert!((dp - psi1(x)).abs() <= 1e-6 * (1.0 + psi1(x)));
    }

    #[test]
    fn differences_match_sums(a in 1e-3f64..1e3, y in 0u32..60) {
        let y = y as f64;
        let (mut lr, mut dd, mut td) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..y as u32 {
            let t = a + k as f64;
            lr += t.ln();
            dd += 1.0 / t;
            td -= 1.0 / (t * t);
        }
        prop_assert!((ln_gamma_ratio(a, y) - lr).abs() <= 1e-11 * (1.0 + lr.abs()));
        prop_assert!((digamma_diff(a, y) - dd).abs() <= 1e-11 * (1.0 + dd.abs()));
        prop_assert!((trigamma_diff(a, y) - td).abs() <= 1e-10 * (1.0 + td.abs()));
    }

    #[test]
    fn digamma_inverse(x in 1e-2f64..1e5) {
        let back = digamma_inv(psi(x)).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * x);
    }
}
