//! Adaptive profile maximization for NB(ν, p) and the extended NB(μ, p).
//!
//! The NB fit maximizes `h(ν)` over `(ε, ν_max]` starting from the moment
//! estimate, then compares the optimum with `h(ν_max)`. ν̂ = ν_max signals
//! Poisson-like data and is flagged as a boundary result.
//!
//! For an all-zero sample every ν ∈ (0, ν_max] with p̂ = 1 maximizes the
//! likelihood; the fitter reports ν̂ = 1 by convention.

use serde::{Deserialize, Serialize};

use crate::dist::{nb_log_pmf, ExtNBParams, NBParams};
use crate::error::{NbError, Result};
use crate::numeric::CompensatedSum;
use crate::sample::CountSample;
use crate::score::{p_hat, ScoreContext, ScoreForm};
use crate::special::lgamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub nu_max: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub max_iter: u32,
    pub grad_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nu_max: 1e4,
            epsilon: 1e-3,
            delta: 0.1,
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NbError::InvalidParameter(m));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.nu_max.is_finite() && self.nu_max > self.epsilon) {
            return bad(format!(
                "nu_max must be finite and exceed epsilon, got {}",
                self.nu_max
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be > 0, got {}", self.grad_tol));
        }
        Ok(())
    }

    /// Closed stand-in for the open lower bound ε.
    pub fn lower(&self) -> f64 {
        self.epsilon * (1.0 + 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    AllZero,
    PoissonBranch,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedParams {
    Nb(NBParams),
    ExtNb(ExtNBParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: FittedParams,
    pub loglik: f64,
    /// ν̂ = ν_max.
    pub at_boundary: bool,
    pub branch: Branch,
    pub iterations: u32,
    /// Moment starting value; `None` when no optimization ran.
    pub init_nu: Option<f64>,
    /// The maximizer met its stopping rule within `max_iter`.
    pub converged: bool,
    pub form: Option<ScoreForm>,
}

impl FitResult {
    /// ν̂, when the fitted law has a finite-size NB form.
    pub fn nu_hat(&self) -> Option<f64> {
        match self.params {
            FittedParams::Nb(p) => Some(p.nu()),
            FittedParams::ExtNb(e) => e.nu(),
        }
    }

    pub fn p_hat(&self) -> f64 {
        match self.params {
            FittedParams::Nb(p) => p.p(),
            FittedParams::ExtNb(e) => e.p(),
        }
    }

    /// Mean of the fitted law.
    pub fn mean_hat(&self) -> f64 {
        match self.params {
            FittedParams::Nb(p) => p.mean(),
            FittedParams::ExtNb(e) => e.mu(),
        }
    }

    pub fn law(&self) -> crate::dist::CountLaw {
        match self.params {
            FittedParams::Nb(p) => p.into(),
            FittedParams::ExtNb(e) => e.into(),
        }
    }
}

/// `min{ν_max, Ȳ²/max(ε, S² − Ȳ)}` with the unbiased S²; ν_max when n = 1.
pub fn moment_init(s: &CountSample, cfg: &FitConfig) -> f64 {
    let mean = s.mean();
    match s.var_unbiased() {
        Some(v) => {
            let denom = (v - mean).max(cfg.epsilon);
            (mean * mean / denom).min(cfg.nu_max).max(cfg.lower())
        }
        None => cfg.nu_max,
    }
}

/// Outcome of the bounded one-dimensional search.
#[derive(Debug, Clone, Copy)]
struct Optimum {
    nu: f64,
    h: f64,
    iterations: u32,
    converged: bool,
}

/// Maximizes `h` over `[lower, ν_max]` in `u = ln ν`.
///
/// `φ(u) = ν g(ν)` has the sign of `dh/du`. The search brackets the sign
/// change of φ and takes Newton steps using the analytic `g′`, falling back
/// to bisection whenever a step leaves the bracket or the curvature has the
/// wrong sign.
fn maximize(ctx: &ScoreContext<'_>, cfg: &FitConfig, init: f64) -> Optimum {
    let lo_nu = cfg.lower();
    let hi_nu = cfg.nu_max;
    let (lo, hi) = (lo_nu.ln(), hi_nu.ln());
    let phi = |u: f64| {
        let nu = u.exp();
        let g = ctx.g(nu);
        let gp = ctx.g_prime(nu);
        (nu * g, nu * g + nu * nu * gp)
    };

    let mut iterations = 0u32;
    let u0 = init.clamp(lo_nu, hi_nu).ln();
    let (f0, d0) = phi(u0);
    iterations += 1;
    if f0 == 0.0 {
        return Optimum {
            nu: u0.exp(),
            h: ctx.h(u0.exp()),
            iterations,
            converged: true,
        };
    }

    // Bracket [a, b] with φ(a) > 0 > φ(b).
    let (mut a, mut b);
    if f0 > 0.0 {
        let (fh, _) = phi(hi);
        iterations += 1;
        if fh >= 0.0 {
            return Optimum {
                nu: hi_nu,
                h: ctx.h(hi_nu),
                iterations,
                converged: true,
            };
        }
        a = u0;
        b = hi;
    } else {
        let (fl, _) = phi(lo);
        iterations += 1;
        if fl <= 0.0 {
            return Optimum {
                nu: lo_nu,
                h: ctx.h(lo_nu),
                iterations,
                converged: true,
            };
        }
        a = lo;
        b = u0;
    }

    let n = ctx.sample().n() as f64;
    let (mut u, mut f, mut d) = (u0, f0, d0);
    while iterations < cfg.max_iter {
        let nu = u.exp();
        let h = ctx.h(nu);
        // φ = ν h′/n, so |n φ / ν| = |h′|
        let grad = (n * f / nu).abs();
        // predicted gain of a Newton step, in log-likelihood units
        let gain = if d < 0.0 { n * f * f / (-2.0 * d) } else { f64::INFINITY };
        let scale = 1.0 + h.abs();
        if f == 0.0 || (grad <= cfg.grad_tol * scale && gain <= 1e-12 * scale) {
            return Optimum {
                nu,
                h,
                iterations,
                converged: true,
            };
        }
        if b - a <= 1e-12 * (1.0 + u.abs()) {
            return Optimum {
                nu,
                h,
                iterations,
                converged: true,
            };
        }

        let mut next = if d < 0.0 { u - f / d } else { f64::NAN };
        if !(next > a && next < b) || (next - u).abs() > 2.0 {
            next = 0.5 * (a + b);
        }
        u = next;
        let (fu, du) = phi(u);
        iterations += 1;
        f = fu;
        d = du;
        if f > 0.0 {
            a = u;
        } else if f < 0.0 {
            b = u;
        }
    }
    let nu = u.exp();
    Optimum {
        nu,
        h: ctx.h(nu),
        iterations,
        converged: false,
    }
}

/// Runs the optimization core on a sample with positive mean.
fn nb_core(s: &CountSample, cfg: &FitConfig) -> Result<(f64, f64, bool, Optimum, f64, ScoreForm)> {
    let ctx = ScoreContext::new(s, cfg.delta)?;
    let init = moment_init(s, cfg);
    let opt = maximize(&ctx, cfg, init);
    let (mut nu, mut h) = (opt.nu, opt.h);
    let h_max = ctx.h(cfg.nu_max);
    if h_max > h {
        nu = cfg.nu_max;
        h = h_max;
    }
    let at_boundary = nu == cfg.nu_max;
    Ok((nu, h, at_boundary, opt, init, ctx.form()))
}

/// Fits NB(ν, p) by maximizing the profile likelihood.
pub fn fit_nb(s: &CountSample, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if s.is_all_zero() {
        return Ok(FitResult {
            params: FittedParams::Nb(NBParams::new(1.0, 1.0)?),
            loglik: 0.0,
            at_boundary: false,
            branch: Branch::AllZero,
            iterations: 0,
            init_nu: None,
            converged: true,
            form: None,
        });
    }
    let (nu, h, at_boundary, opt, init, form) = nb_core(s, cfg)?;
    Ok(FitResult {
        params: FittedParams::Nb(NBParams::new(nu, p_hat(nu, s.mean()))?),
        loglik: h,
        at_boundary,
        branch: Branch::Optimized,
        iterations: opt.iterations,
        init_nu: Some(init),
        converged: opt.converged,
        form: Some(form),
    })
}

/// Fits the extended NB(μ, p); μ̂ = Ȳ in every branch.
pub fn fit_ext_nb(s: &CountSample, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mean = s.mean();
    if s.is_all_zero() {
        return Ok(FitResult {
            params: FittedParams::ExtNb(ExtNBParams::new(0.0, 1.0)?),
            loglik: 0.0,
            at_boundary: false,
            branch: Branch::AllZero,
            iterations: 0,
            init_nu: None,
            converged: true,
            form: None,
        });
    }
    if s.dispersion() != std::cmp::Ordering::Greater {
        let (_, loglik) = fit_poisson(s);
        return Ok(FitResult {
            params: FittedParams::ExtNb(ExtNBParams::new(mean, 1.0)?),
            loglik,
            at_boundary: false,
            branch: Branch::PoissonBranch,
            iterations: 0,
            init_nu: None,
            converged: true,
            form: None,
        });
    }
    let (nu, h, at_boundary, opt, init, form) = nb_core(s, cfg)?;
    Ok(FitResult {
        params: FittedParams::ExtNb(ExtNBParams::new(mean, p_hat(nu, mean))?),
        loglik: h,
        at_boundary,
        branch: Branch::Optimized,
        iterations: opt.iterations,
        init_nu: Some(init),
        converged: opt.converged,
        form: Some(form),
    })
}

/// Poisson MLE `λ̂ = Ȳ` and its log-likelihood, with `0 · ln 0 = 0`.
pub fn fit_poisson(s: &CountSample) -> (f64, f64) {
    let mean = s.mean();
    let n = s.n() as f64;
    let mut acc = CompensatedSum::new();
    if mean > 0.0 {
        acc.add(n * mean * mean.ln());
    }
    acc.add(-n * mean);
    for (&y, &c) in s.freq() {
        if y > 1 {
            acc.add(-(c as f64) * lgamma(y as f64 + 1.0));
        }
    }
    (mean, acc.value())
}

/// Brute-force maximizer of the profile likelihood, independent of the score
/// module: a log-uniform grid over `[ε, ν_max]` followed by golden-section
/// refinement around the best grid point. Returns `(ν, h(ν))`.
pub fn grid_oracle(s: &CountSample, cfg: &FitConfig, grid_points: usize) -> (f64, f64) {
    if s.is_all_zero() {
        return (1.0, 0.0);
    }
    let mean = s.mean();
    let h = |nu: f64| -> f64 {
        let params = match NBParams::new(nu, p_hat(nu, mean)) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        s.freq()
            .iter()
            .map(|(&y, &c)| c as f64 * nb_log_pmf(params, y))
            .collect::<CompensatedSum>()
            .value()
    };
    let points = grid_points.max(2);
    let (lo, hi) = (cfg.epsilon.ln(), cfg.nu_max.ln());
    let at = |i: usize| {
        if i + 1 == points {
            cfg.nu_max
        } else {
            (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
        }
    };
    let mut best = (at(0), h(at(0)), 0usize);
    for i in 1..points {
        let nu = at(i);
        let v = h(nu);
        if v > best.1 {
            best = (nu, v, i);
        }
    }
    let i = best.2;
    let (mut a, mut b) = (at(i.saturating_sub(1)).ln(), at((i + 1).min(points - 1)).ln());
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut hc, mut hd) = (h(c.exp()), h(d.exp()));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if hc > hd {
            b = d;
            d = c;
            hd = hc;
            c = b - ratio * (b - a);
            hc = h(c.exp());
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + ratio * (b - a);
            hd = h(d.exp());
        }
    }
    for (u, v) in [(c, hc), (d, hd)] {
        if v > best.1 {
            best = (u.exp().min(cfg.nu_max), v, i);
        }
    }
    (best.0, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prussian() -> CountSample {
        CountSample::from_frequencies([(0, 144), (1, 91), (2, 32), (3, 11), (4, 2)]).unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = FitConfig::default();
        assert_eq!((c.nu_max, c.epsilon, c.delta, c.max_iter), (1e4, 1e-3, 0.1, 500));
        assert!(c.validate().is_ok());
        let bad = FitConfig {
            epsilon: 2e4,
            ..c
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn moment_init_values() {
        let cfg = FitConfig::default();
        assert!((moment_init(&prussian(), &cfg) - 0.49 / (212.8 / 279.0 - 0.7)).abs() < 1e-12);
        assert!((moment_init(&prussian(), &cfg) - 7.8113).abs() < 1e-3);
        // Ȳ = 5, S² = 4
        let under = CountSample::from_counts(&[3, 7, 3, 7, 5]).unwrap();
        assert_eq!(under.var_unbiased(), Some(4.0));
        assert_eq!(moment_init(&under, &cfg), 1e4);
        // Ȳ = 1, S² = 2
        let over = CountSample::from_counts(&[0, 0, 1, 3]).unwrap();
        assert_eq!(over.var_unbiased(), Some(2.0));
        assert!((moment_init(&over, &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prussian_fit() {
        let r = fit_nb(&prussian(), &FitConfig::default()).unwrap();
        let nu = r.nu_hat().unwrap();
        assert!((nu - 7.6072).abs() < 1e-3, "nu = {nu}");
        assert!((r.p_hat() - 0.9157).abs() < 1e-4);
        assert!((r.loglik + 313.65).abs() < 0.01);
        assert!(!r.at_boundary);
        assert!(r.converged);
        assert_eq!(r.branch, Branch::Optimized);
        assert!((r.p_hat() - nu / (nu + 0.7)).abs() < 1e-12);
    }

    #[test]
    fn all_zero_fits() {
        let s = CountSample::from_counts(&[0, 0, 0]).unwrap();
        let r = fit_nb(&s, &FitConfig::default()).unwrap();
        assert_eq!((r.nu_hat(), r.p_hat(), r.loglik), (Some(1.0), 1.0, 0.0));
        assert_eq!(r.branch, Branch::AllZero);
        let e = fit_ext_nb(&s, &FitConfig::default()).unwrap();
        assert_eq!((e.mean_hat(), e.p_hat(), e.loglik), (0.0, 1.0, 0.0));
    }

    #[test]
    fn underdispersed_hits_boundary() {
        let s = CountSample::from_counts(&[3, 7, 3, 7, 5, 4, 6]).unwrap();
        let r = fit_nb(&s, &FitConfig::default()).unwrap();
        assert_eq!(r.nu_hat(), Some(1e4));
        assert!(r.at_boundary);
    }

    #[test]
    fn extended_fits() {
        let cfg = FitConfig::default();
        let s = CountSample::from_counts(&[2, 2, 2]).unwrap();
        let r = fit_ext_nb(&s, &cfg).unwrap();
        assert_eq!(r.branch, Branch::PoissonBranch);
        assert_eq!((r.mean_hat(), r.p_hat()), (2.0, 1.0));
        assert!((r.loglik - 3.0 * (2f64.ln() - 2.0)).abs() < 1e-12);
        assert!((r.loglik + 3.9206).abs() < 1e-4);
        assert_eq!(r.loglik, fit_poisson(&s).1);

        let r = fit_ext_nb(&prussian(), &cfg).unwrap();
        assert_eq!(r.mean_hat(), 0.7);
        assert!((r.p_hat() - 0.9157).abs() < 1e-4);
    }

    #[test]
    fn poisson_fit() {
        let zeros = CountSample::from_counts(&[0, 0]).unwrap();
        assert_eq!(fit_poisson(&zeros), (0.0, 0.0));
        let (l, ll) = fit_poisson(&CountSample::from_counts(&[2, 2, 2]).unwrap());
        assert_eq!(l, 2.0);
        assert!((ll + 3.9206).abs() < 1e-4);
        let s = prussian();
        let ext = ExtNBParams::new(0.7, 1.0).unwrap();
        let direct: f64 = s
            .freq()
            .iter()
            .map(|(&y, &c)| c as f64 * crate::dist::ext_nb_log_pmf(ext, y))
            .sum();
        assert!((fit_poisson(&s).1 - direct).abs() < 1e-10);
    }

    #[test]
    fn oracle_agrees() {
        let cfg = FitConfig::default();
        let s = prussian();
        let (nu, h) = grid_oracle(&s, &cfg, 4000);
        assert!((nu - 7.6072).abs() < 1e-2);
        let r = fit_nb(&s, &cfg).unwrap();
        assert!(h <= r.loglik + 1e-6);
        let c = CountSample::from_counts(&[2, 2, 2]).unwrap();
        assert_eq!(grid_oracle(&c, &cfg, 1000).0, 1e4);
    }
}
