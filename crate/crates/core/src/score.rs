//! Profile log-likelihood `h(ν)`, score `g(ν) = h′(ν)/n` and `g′(ν)`.
//!
//! Each quantity has two evaluation routes. The frequency form walks the
//! partial harmonic sums `1/ν + … + 1/(ν + y − 1)` of every distinct value;
//! the digamma form uses `Ψ(ν + y) − Ψ(ν)` and `Ψ₁(ν + y) − Ψ₁(ν)`. The fitter
//! picks the frequency form when few distinct values occur.

use crate::error::{NbError, Result};
use crate::numeric::CompensatedSum;
use crate::sample::CountSample;
use crate::special::{digamma_diff, lgamma, ln_gamma_ratio, trigamma_diff};

/// Beyond this value partial harmonic sums are replaced by special-function differences.
const HARMONIC_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreForm {
    /// Harmonic sums over the frequency table.
    Freq,
    /// Digamma / trigamma differences.
    Psi,
}

impl ScoreForm {
    /// Frequency form iff `|I|/n < δ`.
    pub fn select(sample: &CountSample, delta: f64) -> Self {
        if sample.distinct_ratio() < delta {
            ScoreForm::Freq
        } else {
            ScoreForm::Psi
        }
    }
}

/// A sample prepared for repeated evaluation of `h`, `g` and `g′`.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    sample: &'a CountSample,
    form: ScoreForm,
    delta: f64,
    /// `(y, f_y)` for y > 0
    support: Vec<(u64, f64)>,
    /// `Σ f_y ln Γ(y + 1)`
    log_fact: f64,
}

impl<'a> ScoreContext<'a> {
    /// Context whose form follows the `δ` rule.
    pub fn new(sample: &'a CountSample, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(NbError::InvalidParameter(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Self::build(sample, ScoreForm::select(sample, delta), delta)
    }

    /// Context with an explicitly chosen form.
    pub fn with_form(sample: &'a CountSample, form: ScoreForm) -> Result<Self> {
        Self::build(sample, form, f64::NAN)
    }

    fn build(sample: &'a CountSample, form: ScoreForm, delta: f64) -> Result<Self> {
        if sample.is_all_zero() {
            return Err(NbError::Domain(
                "profile likelihood needs a sample with positive mean".into(),
            ));
        }
        let support: Vec<(u64, f64)> = sample
            .freq()
            .iter()
            .filter(|(&y, _)| y > 0)
            .map(|(&y, &c)| (y, c as f64))
            .collect();
        let log_fact = support
            .iter()
            .map(|&(y, f)| f * lgamma(y as f64 + 1.0))
            .collect::<CompensatedSum>()
            .value();
        Ok(Self {
            sample,
            form,
            delta,
            support,
            log_fact,
        })
    }

    pub fn sample(&self) -> &CountSample {
        self.sample
    }

    pub fn form(&self) -> ScoreForm {
        self.form
    }

    /// The threshold used for form selection; NaN when the form was forced.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `h(ν) = l(ν, p̂(ν))`.
    pub fn profile_loglik(&self, nu: f64) -> Result<f64> {
        check_nu(nu)?;
        Ok(self.h(nu))
    }

    /// `g(ν) = h′(ν)/n`.
    pub fn score_g(&self, nu: f64) -> Result<f64> {
        check_nu(nu)?;
        Ok(self.g(nu))
    }

    /// `g′(ν)`.
    pub fn score_g_prime(&self, nu: f64) -> Result<f64> {
        check_nu(nu)?;
        Ok(self.g_prime(nu))
    }

    pub(crate) fn h(&self, nu: f64) -> f64 {
        let n = self.sample.n() as f64;
        let mean = self.sample.mean();
        let mut acc = CompensatedSum::new();
        match self.form {
            ScoreForm::Freq => {
                for &(y, f) in &self.support {
                    acc.add(f * log_rising(nu, y));
                }
            }
            ScoreForm::Psi => {
                for &(y, f) in &self.support {
                    acc.add(f * ln_gamma_ratio(nu, y as f64));
                }
            }
        }
        // ν ln p̂ + Ȳ ln(1 − p̂), per observation
        let tail = -nu * (mean / nu).ln_1p() - mean * (nu / mean).ln_1p();
        acc.add(n * tail);
        acc.add(-self.log_fact);
        acc.value()
    }

    pub(crate) fn g(&self, nu: f64) -> f64 {
        let n = self.sample.n() as f64;
        let mean = self.sample.mean();
        let mut acc = CompensatedSum::new();
        match self.form {
            ScoreForm::Freq => {
                for &(y, f) in &self.support {
                    acc.add(f * harmonic(nu, y));
                }
            }
            ScoreForm::Psi => {
                for &(y, f) in &self.support {
                    acc.add(f * digamma_diff(nu, y as f64));
                }
            }
        }
        acc.value() / n - (mean / nu).ln_1p()
    }

    pub(crate) fn g_prime(&self, nu: f64) -> f64 {
        let n = self.sample.n() as f64;
        let mean = self.sample.mean();
        let mut acc = CompensatedSum::new();
        match self.form {
            ScoreForm::Freq => {
                for &(y, f) in &self.support {
                    acc.add(-f * harmonic_sq(nu, y));
                }
            }
            ScoreForm::Psi => {
                for &(y, f) in &self.support {
                    acc.add(f * trigamma_diff(nu, y as f64));
                }
            }
        }
        acc.value() / n + mean / (nu * (nu + mean))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(NbError::Domain(format!("nu must be finite and > 0, got {nu}")))
    }
}

/// `Σ_{k<y} ln(ν + k)`.
fn log_rising(nu: f64, y: u64) -> f64 {
    if y > HARMONIC_LIMIT {
        return ln_gamma_ratio(nu, y as f64);
    }
    (0..y)
        .map(|k| (nu + k as f64).ln())
        .collect::<CompensatedSum>()
        .value()
}

/// `Σ_{k<y} 1/(ν + k)`.
fn harmonic(nu: f64, y: u64) -> f64 {
    if y > HARMONIC_LIMIT {
        return digamma_diff(nu, y as f64);
    }
    (0..y)
        .map(|k| 1.0 / (nu + k as f64))
        .collect::<CompensatedSum>()
        .value()
}

/// `Σ_{k<y} 1/(ν + k)²`.
fn harmonic_sq(nu: f64, y: u64) -> f64 {
    if y > HARMONIC_LIMIT {
        return -trigamma_diff(nu, y as f64);
    }
    (0..y)
        .map(|k| {
            let t = nu + k as f64;
            1.0 / (t * t)
        })
        .collect::<CompensatedSum>()
        .value()
}

/// `p̂(ν) = ν/(ν + Ȳ)`.
pub fn p_hat(nu: f64, mean: f64) -> f64 {
    nu / (nu + mean)
}
