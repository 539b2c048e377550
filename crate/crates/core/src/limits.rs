//! Numeric oracles for the limiting score and the NB/Poisson CDF difference.
//!
//! Under iid sampling from F with mean μ, `g(ν)` converges almost surely to
//! `G_F(ν) = Σ_{y≥0} (1 − F(y))/(ν + y) − ln(1 + μ/ν)`. `G_F` vanishes at the
//! true size when F is NB and is strictly positive when F is Poisson.

use crate::dist::{pois_log_pmf, nb_poisson_log_ratio, CountLaw, NBParams, PoissonParams};
use crate::error::{NbError, Result};
use crate::numeric::CompensatedSum;
use crate::special::digamma_diff;

/// Series length beyond which evaluation is abandoned.
pub const MAX_TERMS: u64 = 10_000_000;

/// Default truncation tolerance for theory checks.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A law on {0, 1, 2, …} with finite mean and a certified tail.
pub trait DiscreteLaw {
    fn pmf(&self, y: u64) -> f64;

    fn mean(&self) -> f64;

    /// Upper bound on `pmf(k + 1)/pmf(k)` over all k ≥ y; values ≥ 1 mean no bound.
    fn tail_ratio(&self, y: u64) -> f64;

    /// Upper bound on `1 − F(y)`.
    fn tail_bound(&self, y: u64) -> f64 {
        let q = self.tail_ratio(y);
        if q < 1.0 {
            self.pmf(y) * q / (1.0 - q)
        } else {
            1.0
        }
    }
}

impl DiscreteLaw for CountLaw {
    fn pmf(&self, y: u64) -> f64 {
        CountLaw::pmf(self, y)
    }

    fn mean(&self) -> f64 {
        CountLaw::mean(self)
    }

    fn tail_ratio(&self, y: u64) -> f64 {
        let k = y as f64;
        match *self {
            CountLaw::PointMass => 0.0,
            CountLaw::Poisson(p) => p.lambda() / (k + 1.0),
            CountLaw::Nb(p) if p.p() == 1.0 => 0.0,
            CountLaw::Nb(p) => {
                let q = 1.0 - p.p();
                ((p.nu() + k) * q / (k + 1.0)).max(q)
            }
        }
    }
}

/// A law given by an explicit finite PMF table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedLaw {
    pmf: Vec<f64>,
    mean: f64,
}

impl TabulatedLaw {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(NbError::InvalidParameter("pmf entries must be finite and >= 0".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(NbError::InvalidParameter(format!("pmf sums to {total}, not 1")));
        }
        let mean = pmf
            .iter()
            .enumerate()
            .map(|(y, &f)| y as f64 * f)
            .collect::<CompensatedSum>()
            .value();
        Ok(Self { pmf, mean })
    }
}

impl DiscreteLaw for TabulatedLaw {
    fn pmf(&self, y: u64) -> f64 {
        self.pmf.get(y as usize).copied().unwrap_or(0.0)
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn tail_ratio(&self, y: u64) -> f64 {
        if y as usize + 1 >= self.pmf.len() {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// `x − ln(1 + x)`, accurate for small x.
fn x_minus_ln1p(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // x²/2 − x³/3 + x⁴/4 − …
        let mut term = x * x;
        let mut acc = 0.0;
        for k in 2..12 {
            acc += term / k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            term *= x;
        }
        acc
    } else {
        x - x.ln_1p()
    }
}

/// `G_F(ν)` from the tail-sum form, truncated once the certified remainder is
/// below `tol`.
///
/// For ν ≥ μ the equivalent form `[μ/ν − ln(1 + μ/ν)] − ν⁻¹ Σ S(y) y/(ν + y)`
/// is used, with `S(y) = 1 − F(y)`; it avoids subtracting two O(1/ν) terms
/// whose difference is O(1/ν³).
#[allow(non_snake_case)]
pub fn G_of<L: DiscreteLaw + ?Sized>(law: &L, nu: f64, tol: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(NbError::Domain(format!("nu must be finite and > 0, got {nu}")));
    }
    if !(tol > 0.0) {
        return Err(NbError::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    let mu = law.mean();
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(NbError::InvalidParameter(format!("law mean must be finite, got {mu}")));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let rearranged = nu >= mu;
    let mut acc = CompensatedSum::new();
    let mut cdf = CompensatedSum::new();
    let mut y: u64 = 0;
    loop {
        let f = law.pmf(y);
        cdf.add(f);
        let surv = (1.0 - cdf.value()).max(0.0);
        let yf = y as f64;
        if rearranged {
            acc.add(surv * yf / (nu + yf));
        } else {
            acc.add(surv / (nu + yf));
        }
        // Σ_{k>y} S(k) ≤ pmf(y) q²/(1 − q)² once the ratio bound q < 1 holds
        let q = law.tail_ratio(y);
        if q < 1.0 {
            let rest = f * q * q / ((1.0 - q) * (1.0 - q));
            let weight = if rearranged { 1.0 / nu } else { 1.0 / (nu + yf + 1.0) };
            if rest * weight < tol || surv == 0.0 && q == 0.0 {
                break;
            }
        }
        y += 1;
        if y > MAX_TERMS {
            return Err(NbError::Precision(format!(
                "G series did not reach tolerance {tol} within {MAX_TERMS} terms"
            )));
        }
    }
    let x = mu / nu;
    Ok(if rearranged {
        x_minus_ln1p(x) - acc.value() / nu
    } else {
        acc.value() - x.ln_1p()
    })
}

/// Second route for `G_F(ν)`: `E[Ψ(ν + Y) − Ψ(ν)] − ln(1 + μ/ν)`.
#[allow(non_snake_case)]
pub fn G_of_psi<L: DiscreteLaw + ?Sized>(law: &L, nu: f64, tol: f64) -> Result<f64> {
    let mu = law.mean();
    if mu == 0.0 {
        return Ok(0.0);
    }
    let mut acc = CompensatedSum::new();
    let mut y = 0u64;
    loop {
        let f = law.pmf(y);
        acc.add(f * digamma_diff(nu, y as f64));
        let q = law.tail_ratio(y);
        // Ψ(ν + k) − Ψ(ν) ≤ k/ν, so the tail is below Σ_{k>y} pmf(k) k/ν
        if q < 1.0 {
            let k = y as f64 + 1.0;
            let rest = f * q / (1.0 - q) * (k + q / (1.0 - q)) / nu;
            if rest < tol {
                break;
            }
        }
        y += 1;
        if y > MAX_TERMS {
            return Err(NbError::Precision(format!(
                "G series did not reach tolerance {tol} within {MAX_TERMS} terms"
            )));
        }
    }
    Ok(acc.value() - (mu / nu).ln_1p())
}

/// `G_λ(ν)`, the limit of `g(ν)` under Poisson(λ) sampling.
#[allow(non_snake_case)]
pub fn G_lambda(lambda: f64, nu: f64, tol: f64) -> Result<f64> {
    G_of(&CountLaw::Poisson(PoissonParams::new(lambda)?), nu, tol)
}

/// Evaluates `G_λ(ν)` with the tolerance tightened until the value exceeds
/// it by two orders of magnitude, so its sign is certified.
#[allow(non_snake_case)]
pub fn G_lambda_resolved(lambda: f64, nu: f64) -> Result<f64> {
    let mut tol = DEFAULT_TOL;
    loop {
        let g = G_lambda(lambda, nu, tol)?;
        if g.abs() > 100.0 * tol || tol < 1e-290 {
            return Ok(g);
        }
        tol *= 1e-20;
    }
}

/// The sequences `d(y) = f_NB(y) − f_λ(y)` and `D(y) = F_NB(y) − F_λ(y)` at
/// matched means, `p = ν/(ν + λ)`, with their sign-change indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffProfile {
    pub lambda: f64,
    pub nu: f64,
    pub d: Vec<f64>,
    /// `D(y)`.
    pub cum: Vec<f64>,
    /// Last index of the initial run with `d ≥ 0`.
    pub k1: u64,
    /// Last index with `D ≥ 0`.
    pub k_star: u64,
    /// First index of the final run with `d ≥ 0`.
    pub k2: u64,
    pub y_cut: u64,
}

impl DiffProfile {
    /// `Σ_{y ≤ y_cut} D(y)`.
    pub fn sum_d(&self) -> f64 {
        self.cum.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `Σ_{y ≤ y_cut} D(y)/(ν + y)`.
    pub fn weighted_sum(&self) -> f64 {
        self.cum
            .iter()
            .enumerate()
            .map(|(y, &v)| v / (self.nu + y as f64))
            .collect::<CompensatedSum>()
            .value()
    }
}

const DEADBAND: f64 = 1e-14;

fn sign(v: f64, scale: f64) -> i8 {
    if v > DEADBAND * scale {
        1
    } else if v < -DEADBAND * scale {
        -1
    } else {
        0
    }
}

fn structural(index: u64, message: impl Into<String>) -> NbError {
    NbError::Structural {
        index,
        message: message.into(),
    }
}

/// Builds the difference profile and checks its sign structure.
///
/// Values within a relative `1e-14` of zero count as zero and belong to the
/// nonnegative runs. `K₁ = 0` is accepted: for small λ the difference can be
/// negative from y = 1 on.
pub fn diff_profile(lambda: f64, nu: f64, tol: f64) -> Result<DiffProfile> {
    let pois = PoissonParams::new(lambda)?;
    let nb = NBParams::new(nu, nu / (nu + lambda))?;
    if !(tol > 0.0) {
        return Err(NbError::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    let nb_law = CountLaw::Nb(nb);
    let pois_law = CountLaw::Poisson(pois);

    // y_cut: the summed survival functions beyond it, which bound the
    // truncation error of ΣD, are certified below tol
    let residual = |law: &CountLaw, y: u64| {
        let q = law.tail_ratio(y);
        if q < 1.0 {
            law.tail_bound(y) / (1.0 - q)
        } else {
            f64::INFINITY
        }
    };
    let mut y_cut = lambda.ceil() as u64 + 1;
    loop {
        if residual(&nb_law, y_cut) < tol && residual(&pois_law, y_cut) < tol {
            break;
        }
        y_cut += 1;
        if y_cut > MAX_TERMS {
            return Err(NbError::Precision(format!(
                "difference profile tails did not fall below {tol}"
            )));
        }
    }

    let len = y_cut as usize + 1;
    let mut d = Vec::with_capacity(len);
    let mut scale = Vec::with_capacity(len);
    for y in 0..=y_cut {
        let lp = pois_log_pmf(pois, y);
        let r = nb_poisson_log_ratio(lambda, nu, y as f64);
        let fp = lp.exp();
        let fnb = (lp + r).exp();
        let v = if r.abs() < 1.0 { fp * r.exp_m1() } else { fnb - fp };
        d.push(v);
        scale.push(fnb.max(fp));
    }
    let signs: Vec<i8> = d.iter().zip(&scale).map(|(&v, &s)| sign(v, s)).collect();

    let first_neg = signs
        .iter()
        .position(|&s| s < 0)
        .ok_or_else(|| structural(0, "d(y) never negative"))?;
    if first_neg == 0 {
        return Err(structural(0, "d(0) must be positive"));
    }
    let k1 = first_neg as u64 - 1;
    let last_neg = signs.iter().rposition(|&s| s < 0).expect("a negative exists");
    let k2 = last_neg as u64 + 1;
    if k2 >= y_cut {
        return Err(structural(k2, "final nonnegative run starts at the truncation point"));
    }
    for y in (k1 + 1)..k2 {
        if signs[y as usize] >= 0 {
            return Err(structural(y, "d(y) must be negative strictly between K1 and K2"));
        }
    }

    // D forward up to K₂ − 1, from the tail beyond (D(y) = −Σ_{k>y} d(k)) from K₂ on
    let mut big_d = vec![0.0; len];
    let mut fwd = CompensatedSum::new();
    for y in 0..k2 as usize {
        fwd.add(d[y]);
        big_d[y] = fwd.value();
    }
    let mut bwd = CompensatedSum::new();
    for y in (k2 as usize..len).rev() {
        big_d[y] = -bwd.value();
        bwd.add(d[y]);
    }
    let d_scale = big_d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d_signs: Vec<i8> = big_d.iter().map(|&v| sign(v, d_scale)).collect();
    // Far-tail D values vanish into the deadband, so K* is read off the first
    // sign change rather than the last nonnegative entry.
    let k_star = match d_signs.iter().position(|&s| s < 0) {
        Some(0) => return Err(structural(0, "D(0) must be positive")),
        Some(y) => y as u64 - 1,
        None => return Err(structural(0, "D(y) never negative")),
    };

    if !(k1 < k_star && k_star < k2) {
        return Err(structural(
            k_star,
            format!("expected K1 < K* < K2, got {k1}, {k_star}, {k2}"),
        ));
    }
    for y in 0..k_star {
        if d_signs[y as usize] <= 0 {
            return Err(structural(y, "D(y) must be positive before K*"));
        }
    }
    // The last stored D is the truncated remainder itself.
    for y in (k_star + 1)..y_cut {
        if d_signs[y as usize] > 0 {
            return Err(structural(y, "D(y) must be negative after K*"));
        }
    }
    // D rises to its maximum at K₁, falls to its minimum at the end of the
    // negative run, then climbs back toward zero.
    for y in 1..=k1 as usize {
        if big_d[y] < big_d[y - 1] {
            return Err(structural(y as u64, "D(y) must increase up to K1"));
        }
    }
    for y in (k1 as usize + 1)..k2 as usize {
        if big_d[y] >= big_d[y - 1] {
            return Err(structural(y as u64, "D(y) must decrease between K1 and K2"));
        }
    }
    for y in (k2 as usize + 1)..len {
        if d_signs[y] != 0 && big_d[y] < big_d[y - 1] {
            return Err(structural(y as u64, "D(y) must increase after K2"));
        }
    }
    let max_at = argmax(&big_d);
    if max_at as u64 != k1 {
        return Err(structural(max_at as u64, "maximum of D is not at K1"));
    }
    let min_at = argmin(&big_d) as u64;
    if !(min_at + 1 == k2 || min_at == k2) {
        return Err(structural(min_at, "minimum of D is not at the end of the negative run"));
    }
    Ok(DiffProfile {
        lambda,
        nu,
        d,
        cum: big_d,
        k1,
        k_star,
        k2,
        y_cut,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

/// Log-uniform grid of `points` values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else if i == 0 {
                lo
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}
