//! Poisson, negative binomial and extended negative binomial laws.
//!
//! The negative binomial NB(ν, p) counts failures before the ν-th success:
//! `f(y) = Γ(ν + y) / (Γ(ν) y!) · p^ν (1 − p)^y`, with mean ν(1 − p)/p and
//! variance ν(1 − p)/p². `p = 1` is admitted as the point mass at zero.
//!
//! The extended family NB(μ, p) is indexed by its mean μ ≥ 0 and p ∈ (0, 1]:
//! for μ > 0, p < 1 it is NB(ν = μp/(1 − p), p); p = 1 gives Poisson(μ);
//! μ = 0 gives the point mass at zero.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{NbError, Result};
use crate::special::{digamma_inv, lgamma, ln_gamma_ratio, psi, stirling_correction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonParams {
    lambda: f64,
}

impl PoissonParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda })
        } else {
            Err(NbError::InvalidParameter(format!(
                "Poisson rate must be finite and > 0, got {lambda}"
            )))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// NB(ν, p) with ν > 0 and 0 < p ≤ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NBParams {
    nu: f64,
    p: f64,
}

impl NBParams {
    pub fn new(nu: f64, p: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(NbError::InvalidParameter(format!(
                "NB size must be finite and > 0, got {nu}"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(NbError::InvalidParameter(format!(
                "NB probability must lie in (0, 1], got {p}"
            )));
        }
        Ok(Self { nu, p })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mean(&self) -> f64 {
        self.nu * (1.0 - self.p) / self.p
    }

    pub fn variance(&self) -> f64 {
        self.nu * (1.0 - self.p) / (self.p * self.p)
    }

    pub fn is_degenerate(&self) -> bool {
        self.p == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AltKind {
    /// (ν, μ = ν(1 − p)/p), μ ≥ 0.
    NuMu,
    /// (ν, P = (1 − p)/p), P ≥ 0.
    NuBigP,
    /// (ν, P = 1 − p), 0 ≤ P < 1.
    NuOneMinusP,
}

/// NB in one of the alternative (ν, ·) parameterisations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltNBParams {
    kind: AltKind,
    nu: f64,
    second: f64,
}

impl AltNBParams {
    pub fn new(kind: AltKind, nu: f64, second: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(NbError::InvalidParameter(format!(
                "NB size must be finite and > 0, got {nu}"
            )));
        }
        let ok = match kind {
            AltKind::NuMu | AltKind::NuBigP => second.is_finite() && second >= 0.0,
            AltKind::NuOneMinusP => (0.0..1.0).contains(&second),
        };
        if !ok {
            return Err(NbError::InvalidParameter(format!(
                "second parameter {second} out of range for {kind:?}"
            )));
        }
        Ok(Self { kind, nu, second })
    }

    pub fn kind(&self) -> AltKind {
        self.kind
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn second(&self) -> f64 {
        self.second
    }
}

/// Extended NB(μ, p) with μ ≥ 0 and 0 < p ≤ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtNBParams {
    mu: f64,
    p: f64,
}

impl ExtNBParams {
    pub fn new(mu: f64, p: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(NbError::InvalidParameter(format!(
                "extended NB mean must be finite and >= 0, got {mu}"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(NbError::InvalidParameter(format!(
                "extended NB probability must lie in (0, 1], got {p}"
            )));
        }
        Ok(Self { mu, p })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Equivalent NB size `μp/(1 − p)`, defined for μ > 0 and p < 1.
    pub fn nu(&self) -> Option<f64> {
        (self.mu > 0.0 && self.p < 1.0).then(|| self.mu * self.p / (1.0 - self.p))
    }

    /// The ordinary law this member corresponds to.
    pub fn law(&self) -> CountLaw {
        if self.mu == 0.0 {
            CountLaw::PointMass
        } else if self.p == 1.0 {
            CountLaw::Poisson(PoissonParams { lambda: self.mu })
        } else {
            let nu = self.mu * self.p / (1.0 - self.p);
            CountLaw::Nb(NBParams { nu, p: self.p })
        }
    }
}

/// A fully specified count distribution on {0, 1, 2, …}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountLaw {
    /// All mass at zero.
    PointMass,
    Poisson(PoissonParams),
    Nb(NBParams),
}

impl From<PoissonParams> for CountLaw {
    fn from(p: PoissonParams) -> Self {
        CountLaw::Poisson(p)
    }
}

impl From<NBParams> for CountLaw {
    fn from(p: NBParams) -> Self {
        if p.is_degenerate() {
            CountLaw::PointMass
        } else {
            CountLaw::Nb(p)
        }
    }
}

impl From<ExtNBParams> for CountLaw {
    fn from(p: ExtNBParams) -> Self {
        p.law()
    }
}

impl CountLaw {
    pub fn log_pmf(&self, y: u64) -> f64 {
        match self {
            CountLaw::PointMass => {
                if y == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            CountLaw::Poisson(p) => pois_log_pmf(*p, y),
            CountLaw::Nb(p) => nb_log_pmf(*p, y),
        }
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.log_pmf(y).exp()
    }

    pub fn mean(&self) -> f64 {
        match self {
            CountLaw::PointMass => 0.0,
            CountLaw::Poisson(p) => p.lambda,
            CountLaw::Nb(p) => p.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            CountLaw::PointMass => 0.0,
            CountLaw::Poisson(p) => p.lambda,
            CountLaw::Nb(p) => p.variance(),
        }
    }

    /// Iterator over `pmf(0), pmf(1), …` by forward recurrence.
    pub fn pmfs(&self) -> PmfIter {
        let (log0, kind) = match *self {
            CountLaw::PointMass => (0.0, RatioKind::Zero),
            CountLaw::Poisson(p) => (-p.lambda, RatioKind::Poisson(p.lambda)),
            CountLaw::Nb(p) if p.p == 1.0 => (0.0, RatioKind::Zero),
            CountLaw::Nb(p) => (p.nu * p.p.ln(), RatioKind::Nb(p.nu, 1.0 - p.p)),
        };
        PmfIter::new(log0, kind)
    }

    /// `P(Y ≤ y)`.
    pub fn cdf(&self, y: u64) -> f64 {
        let mut acc = 0.0;
        for pmf in self.pmfs().take(y as usize + 1) {
            acc += pmf;
        }
        acc.min(1.0)
    }

    /// Smallest y with `1 − F(y) ≤ tail`, located by doubling then bisection.
    pub fn upper_quantile(&self, tail: f64) -> u64 {
        let target = 1.0 - tail.max(1e-15);
        if self.cdf(0) >= target {
            return 0;
        }
        let mut hi: u64 = 1;
        while self.cdf(hi) < target {
            if hi > (1 << 40) {
                return hi;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.cdf(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Draws `n` iid variates.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u64> {
        match *self {
            CountLaw::PointMass => vec![0; n],
            CountLaw::Poisson(p) => sample_pois(p, n, rng),
            CountLaw::Nb(p) => sample_nb(p, n, rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum RatioKind {
    Zero,
    Poisson(f64),
    /// (ν, 1 − p)
    Nb(f64, f64),
}

impl RatioKind {
    /// `pmf(k + 1) / pmf(k)`
    #[inline]
    fn ratio(&self, k: f64) -> f64 {
        match *self {
            RatioKind::Zero => 0.0,
            RatioKind::Poisson(l) => l / (k + 1.0),
            RatioKind::Nb(nu, q) => (nu + k) * q / (k + 1.0),
        }
    }
}

const UNDERFLOW_GUARD: f64 = 1e-280;

/// Forward PMF recurrence. Switches to log space while the running value is
/// too small to be represented accurately, so large-mean laws whose `pmf(0)`
/// underflows are still tabulated correctly.
#[derive(Debug, Clone)]
pub struct PmfIter {
    k: f64,
    linear: f64,
    log: f64,
    in_log: bool,
    kind: RatioKind,
}

impl PmfIter {
    fn new(log0: f64, kind: RatioKind) -> Self {
        let linear = log0.exp();
        let in_log = linear < UNDERFLOW_GUARD;
        Self {
            k: 0.0,
            linear,
            log: log0,
            in_log,
            kind,
        }
    }
}

impl Iterator for PmfIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let out = if self.in_log {
            self.log.exp()
        } else {
            self.linear
        };
        let r = self.kind.ratio(self.k);
        if self.in_log {
            self.log += r.ln();
            // only climb back to linear space while still rising toward the mode
            if self.log > UNDERFLOW_GUARD.ln() && r > 1.0 {
                self.in_log = false;
                self.linear = self.log.exp();
            }
        } else {
            self.linear *= r;
            if self.linear < UNDERFLOW_GUARD && self.linear > 0.0 {
                self.in_log = true;
                self.log = self.linear.ln();
            }
        }
        self.k += 1.0;
        Some(out)
    }
}

/// Cumulative distribution table `F(0), …, F(y_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfTable {
    cdf: Vec<f64>,
}

impl CdfTable {
    /// Tabulates until `y ≥ min_y` and `1 − F(y) ≤ tail`.
    pub fn covering(law: &CountLaw, min_y: u64, tail: f64) -> Self {
        let target = 1.0 - tail;
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for (y, pmf) in law.pmfs().enumerate() {
            acc += pmf;
            let v = acc.min(1.0);
            cdf.push(v);
            if y as u64 >= min_y && v >= target {
                break;
            }
            if y > 100_000_000 {
                break;
            }
        }
        Self { cdf }
    }

    /// `F(y)`; 1 beyond the tabulated range.
    pub fn at(&self, y: u64) -> f64 {
        self.cdf.get(y as usize).copied().unwrap_or(1.0)
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.cdf
    }
}

/// `y ln λ − λ − ln Γ(y + 1)`.
pub fn pois_log_pmf(params: PoissonParams, y: u64) -> f64 {
    let l = params.lambda;
    let yf = y as f64;
    let lead = if y == 0 { 0.0 } else { yf * l.ln() };
    lead - l - lgamma(yf + 1.0)
}

/// NB log-PMF; for p = 1, 0 at y = 0 and −∞ elsewhere.
pub fn nb_log_pmf(params: NBParams, y: u64) -> f64 {
    let NBParams { nu, p } = params;
    if p == 1.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let yf = y as f64;
    let tail = if y == 0 { 0.0 } else { yf * (1.0 - p).ln() };
    ln_gamma_ratio(nu, yf) - lgamma(yf + 1.0) + nu * p.ln() + tail
}

pub fn nb_cdf(params: NBParams, y: u64) -> f64 {
    CountLaw::from(params).cdf(y)
}

pub fn pois_cdf(params: PoissonParams, y: u64) -> f64 {
    CountLaw::Poisson(params).cdf(y)
}

/// Extended NB log-PMF over its four cases.
pub fn ext_nb_log_pmf(params: ExtNBParams, y: u64) -> f64 {
    params.law().log_pmf(y)
}

/// Continuous-argument log-PMFs `(ln f_λ(x), ln f_NB(ν, p)(x))` with
/// `p = ν/(ν + λ)` and `Γ(x + 1)` in place of `x!`.
pub fn continuous_log_pmfs(lambda: f64, nu: f64, x: f64) -> (f64, f64) {
    let lg = lgamma(x + 1.0);
    let lead = if x == 0.0 { 0.0 } else { x * lambda.ln() };
    let pois = lead - lambda - lg;
    let p = nu / (nu + lambda);
    let nb_tail = if x == 0.0 {
        0.0
    } else {
        x * (lambda / (nu + lambda)).ln()
    };
    let nb = ln_gamma_ratio(nu, x) - lg + nu * p.ln() + nb_tail;
    (pois, nb)
}

/// `r(x) = ln f_NB(x) − ln f_λ(x)` at matched means, evaluated without the
/// cancellation of subtracting the two log-PMFs when ν is large.
pub fn nb_poisson_log_ratio(lambda: f64, nu: f64, x: f64) -> f64 {
    if nu >= 10.0 {
        // ln Γ(ν+x) − ln Γ(ν) = (ν − ½) ln(1 + x/ν) + x ln(ν + x) − x + ΔS
        let a = (nu - 0.5) * (x / nu).ln_1p() - x;
        let b = lambda - nu * (lambda / nu).ln_1p();
        let c = x * ((x - lambda) / (nu + lambda)).ln_1p();
        let ds = stirling_correction(nu + x) - stirling_correction(nu);
        a + b + c + ds
    } else {
        ln_gamma_ratio(nu, x) - nu * (lambda / nu).ln_1p() - x * (nu + lambda).ln() + lambda
    }
}

/// Derivative `r'(x) = Ψ(ν + x) − ln(ν + λ)`.
pub fn nb_poisson_log_ratio_slope(lambda: f64, nu: f64, x: f64) -> f64 {
    psi(nu + x) - (nu + lambda).ln()
}

/// Unique stationary point `x* = Ψ⁻¹(ln(ν + λ)) − ν` of `r`.
pub fn log_ratio_stationary_point(lambda: f64, nu: f64) -> Result<f64> {
    Ok(digamma_inv((nu + lambda).ln())? - nu)
}

/// Parameterisation tags accepted by [`convert_params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Standard,
    NuMu,
    NuBigP,
    NuOneMinusP,
    Extended,
}

/// A negative binomial member in any supported parameterisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NbRepr {
    Standard(NBParams),
    Alt(AltNBParams),
    Extended(ExtNBParams),
}

impl NbRepr {
    pub fn kind(&self) -> ParamKind {
        match self {
            NbRepr::Standard(_) => ParamKind::Standard,
            NbRepr::Alt(a) => match a.kind {
                AltKind::NuMu => ParamKind::NuMu,
                AltKind::NuBigP => ParamKind::NuBigP,
                AltKind::NuOneMinusP => ParamKind::NuOneMinusP,
            },
            NbRepr::Extended(_) => ParamKind::Extended,
        }
    }

    pub fn law(&self) -> Result<CountLaw> {
        match self {
            NbRepr::Extended(e) => Ok(e.law()),
            other => Ok(CountLaw::from(to_standard(other)?)),
        }
    }
}

fn to_standard(from: &NbRepr) -> Result<NBParams> {
    match *from {
        NbRepr::Standard(p) => Ok(p),
        NbRepr::Alt(a) => {
            let p = match a.kind {
                AltKind::NuMu => a.nu / (a.nu + a.second),
                AltKind::NuBigP => 1.0 / (1.0 + a.second),
                AltKind::NuOneMinusP => 1.0 - a.second,
            };
            NBParams::new(a.nu, p)
        }
        NbRepr::Extended(e) => match e.nu() {
            Some(nu) => NBParams::new(nu, e.p),
            None if e.mu == 0.0 => Err(NbError::Conversion(
                "extended NB with mean 0 has no unique finite size".into(),
            )),
            None => Err(NbError::Conversion(format!(
                "extended NB(μ={}, p=1) is Poisson and has no finite-size NB form",
                e.mu
            ))),
        },
    }
}

/// Re-expresses `from` in the `to` parameterisation.
pub fn convert_params(from: NbRepr, to: ParamKind) -> Result<NbRepr> {
    if from.kind() == to {
        return Ok(from);
    }
    let std = to_standard(&from)?;
    let (nu, p) = (std.nu, std.p);
    Ok(match to {
        ParamKind::Standard => NbRepr::Standard(std),
        ParamKind::NuMu => NbRepr::Alt(AltNBParams::new(AltKind::NuMu, nu, nu * (1.0 - p) / p)?),
        ParamKind::NuBigP => NbRepr::Alt(AltNBParams::new(AltKind::NuBigP, nu, (1.0 - p) / p)?),
        ParamKind::NuOneMinusP => {
            NbRepr::Alt(AltNBParams::new(AltKind::NuOneMinusP, nu, 1.0 - p)?)
        }
        ParamKind::Extended => NbRepr::Extended(ExtNBParams::new(nu * (1.0 - p) / p, p)?),
    })
}

pub fn sample_pois<R: Rng + ?Sized>(params: PoissonParams, n: usize, rng: &mut R) -> Vec<u64> {
    let dist = Poisson::new(params.lambda).expect("validated rate");
    (0..n).map(|_| dist.sample(rng) as u64).collect()
}

/// Gamma–Poisson mixture: `Λ ~ Gamma(ν, (1 − p)/p)`, `Y | Λ ~ Poisson(Λ)`.
pub fn sample_nb<R: Rng + ?Sized>(params: NBParams, n: usize, rng: &mut R) -> Vec<u64> {
    if params.p == 1.0 {
        return vec![0; n];
    }
    let scale = (1.0 - params.p) / params.p;
    let gamma = Gamma::new(params.nu, scale).expect("validated shape and scale");
    (0..n)
        .map(|_| {
            let rate: f64 = gamma.sample(rng);
            if rate > 0.0 && rate.is_finite() {
                Poisson::new(rate).map(|d| d.sample(rng) as u64).unwrap_or(0)
            } else {
                0
            }
        })
        .collect()
}
