//! Sufficient statistics of a nonnegative-integer sample.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{NbError, Result};
use crate::numeric::CompensatedSum;

/// Largest accepted observation: every value must be exactly representable in an f64.
pub const MAX_OBSERVATION: u64 = 1 << 53;

/// Immutable summary of a count sample: frequency table, moments and maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSample {
    n: u64,
    freq: BTreeMap<u64, u64>,
    mean: f64,
    var_biased: f64,
    var_unbiased: Option<f64>,
    max: u64,
    /// Exact sign of `S_n² − Ȳ_n`.
    dispersion: Ordering,
}

/// Which branch of the Anscombe–Simonsen classification a sample falls in.
///
/// Describes whether the score equation `g(ν) = 0` has a root in (0, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimonsenCase {
    /// `M = 0`: every observation is zero.
    NoSolutionAllZero,
    /// `M = 1`: then `S_n² = Ȳ(1 − Ȳ) < Ȳ`.
    NoSolutionMaxOne,
    /// `M ≥ 2` and `S_n² ≤ Ȳ`.
    NoSolutionUnderdispersed,
    /// `M ≥ 2` and `S_n² > Ȳ`: a unique interior root exists.
    UniqueInteriorRoot,
}

impl CountSample {
    /// Builds a sample from `(value, count)` pairs. Pairs with count 0 are ignored;
    /// repeated values are merged.
    pub fn from_frequencies<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut freq = BTreeMap::new();
        for (i, (y, c)) in pairs.into_iter().enumerate() {
            if y > MAX_OBSERVATION {
                return Err(NbError::InvalidObservation {
                    index: i,
                    value: y.to_string(),
                });
            }
            if c > 0 {
                let slot = freq.entry(y).or_insert(0u64);
                *slot = slot
                    .checked_add(c)
                    .ok_or_else(|| NbError::Domain("frequency overflow".into()))?;
            }
        }
        Self::from_table(freq)
    }

    /// Builds a sample from raw counts.
    pub fn from_counts(data: &[u64]) -> Result<Self> {
        let mut freq = BTreeMap::new();
        for (i, &y) in data.iter().enumerate() {
            if y > MAX_OBSERVATION {
                return Err(NbError::InvalidObservation {
                    index: i,
                    value: y.to_string(),
                });
            }
            *freq.entry(y).or_insert(0u64) += 1;
        }
        Self::from_table(freq)
    }

    fn from_table(freq: BTreeMap<u64, u64>) -> Result<Self> {
        let n: u64 = freq.values().sum();
        if n == 0 {
            return Err(NbError::EmptySample);
        }
        let max = *freq.keys().next_back().expect("non-empty table");

        let mut sum: u128 = 0;
        let mut sum_sq: Option<u128> = Some(0);
        for (&y, &c) in &freq {
            let (y, c) = (y as u128, c as u128);
            sum += y * c;
            sum_sq = sum_sq.and_then(|s| y.checked_mul(y)?.checked_mul(c)?.checked_add(s));
        }
        let nf = n as f64;
        let mean = sum as f64 / nf;

        // n Σy² − (Σy)² = n² S_n², exact whenever it fits in 128 bits.
        let exact = sum_sq.and_then(|sq| {
            let a = (n as u128).checked_mul(sq)?;
            let b = sum.checked_mul(sum)?;
            let nsy = (n as u128).checked_mul(sum)?;
            Some((a - b, nsy))
        });

        let (var_biased, dispersion) = match exact {
            Some((scaled_var, scaled_mean)) => {
                let v = scaled_var as f64 / (nf * nf);
                (v, scaled_var.cmp(&scaled_mean))
            }
            None => {
                let mut acc = CompensatedSum::new();
                for (&y, &c) in &freq {
                    let d = y as f64 - mean;
                    acc.add(c as f64 * d * d);
                }
                let v = acc.value() / nf;
                (v, v.partial_cmp(&mean).unwrap_or(Ordering::Equal))
            }
        };
        let var_unbiased = (n >= 2).then(|| var_biased * nf / (nf - 1.0));

        Ok(Self {
            n,
            freq,
            mean,
            var_biased,
            var_unbiased,
            max,
            dispersion,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Frequency table, keyed by observed value in increasing order.
    pub fn freq(&self) -> &BTreeMap<u64, u64> {
        &self.freq
    }

    /// Sample mean `Ȳ_n`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `S_n² = n⁻¹ Σ (Y_i − Ȳ)²`.
    pub fn var_biased(&self) -> f64 {
        self.var_biased
    }

    /// `S² = (n − 1)⁻¹ Σ (Y_i − Ȳ)²`; `None` when n = 1.
    pub fn var_unbiased(&self) -> Option<f64> {
        self.var_unbiased
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    /// Number of distinct observed values.
    pub fn distinct(&self) -> usize {
        self.freq.len()
    }

    /// `|I| / n`.
    pub fn distinct_ratio(&self) -> f64 {
        self.freq.len() as f64 / self.n as f64
    }

    /// `f_0`, the number of zero observations.
    pub fn zero_count(&self) -> u64 {
        self.freq.get(&0).copied().unwrap_or(0)
    }

    /// Exact ordering of `S_n²` relative to `Ȳ_n`.
    pub fn dispersion(&self) -> Ordering {
        self.dispersion
    }

    pub fn is_all_zero(&self) -> bool {
        self.max == 0
    }

    /// Expands the frequency table back into sorted raw observations.
    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        self.freq
            .iter()
            .flat_map(|(&y, &c)| std::iter::repeat_n(y, c as usize))
    }

    pub fn simonsen_case(&self) -> SimonsenCase {
        match self.max {
            0 => SimonsenCase::NoSolutionAllZero,
            1 => SimonsenCase::NoSolutionMaxOne,
            _ if self.dispersion == Ordering::Greater => SimonsenCase::UniqueInteriorRoot,
            _ => SimonsenCase::NoSolutionUnderdispersed,
        }
    }
}

/// Summarises signed integer observations, rejecting negatives.
pub fn summarize(data: &[i64]) -> Result<CountSample> {
    if data.is_empty() {
        return Err(NbError::EmptySample);
    }
    let mut counts = Vec::with_capacity(data.len());
    for (i, &y) in data.iter().enumerate() {
        if y < 0 || y as u64 > MAX_OBSERVATION {
            return Err(NbError::InvalidObservation {
                index: i,
                value: y.to_string(),
            });
        }
        counts.push(y as u64);
    }
    CountSample::from_counts(&counts)
}

/// Summarises real-valued observations that must be nonnegative integers.
pub fn summarize_reals(data: &[f64]) -> Result<CountSample> {
    if data.is_empty() {
        return Err(NbError::EmptySample);
    }
    let mut counts = Vec::with_capacity(data.len());
    for (i, &y) in data.iter().enumerate() {
        if !y.is_finite() || y < 0.0 || y.fract() != 0.0 || y > MAX_OBSERVATION as f64 {
            return Err(NbError::InvalidObservation {
                index: i,
                value: y.to_string(),
            });
        }
        counts.push(y as u64);
    }
    CountSample::from_counts(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prussian() -> CountSample {
        CountSample::from_frequencies([(0, 144), (1, 91), (2, 32), (3, 11), (4, 2)]).unwrap()
    }

    #[test]
    fn all_zero_sample() {
        let s = summarize(&[0, 0, 0]).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.mean(), 0.0);
        assert_eq!(s.max(), 0);
        assert_eq!(s.freq().get(&0), Some(&3));
        assert_eq!(s.simonsen_case(), SimonsenCase::NoSolutionAllZero);
    }

    #[test]
    fn prussian_summary() {
        let s = prussian();
        assert_eq!(s.n(), 280);
        assert!((s.mean() - 0.7).abs() < 1e-15);
        let su = s.var_unbiased().unwrap();
        assert!((su - 212.8 / 279.0).abs() < 1e-14);
        assert!((su - 0.7627).abs() < 5e-5);
        assert!((s.var_biased() - 0.76).abs() < 1e-14);
        assert_eq!(s.simonsen_case(), SimonsenCase::UniqueInteriorRoot);
    }

    #[test]
    fn constant_sample() {
        let s = summarize(&[2, 2, 2]).unwrap();
        assert_eq!(s.mean(), 2.0);
        assert_eq!(s.var_biased(), 0.0);
        assert_eq!(s.var_unbiased(), Some(0.0));
        assert!((s.distinct_ratio() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.simonsen_case(), SimonsenCase::NoSolutionUnderdispersed);
    }

    #[test]
    fn max_one_case() {
        let s = CountSample::from_frequencies([(0, 1), (1, 9)]).unwrap();
        assert_eq!(s.simonsen_case(), SimonsenCase::NoSolutionMaxOne);
        let m = s.mean();
        assert!((s.var_biased() - m * (1.0 - m)).abs() < 1e-15);
        assert!(s.var_biased() < m);
    }

    #[test]
    fn exact_tie_is_not_overdispersed() {
        // {0, 2}: mean 1, S_n² = 1
        let s = summarize(&[0, 2]).unwrap();
        assert_eq!(s.dispersion(), Ordering::Equal);
        assert_eq!(s.simonsen_case(), SimonsenCase::NoSolutionUnderdispersed);
    }

    #[test]
    fn single_observation_has_no_unbiased_variance() {
        let s = summarize(&[4]).unwrap();
        assert_eq!(s.var_unbiased(), None);
        assert_eq!(s.var_biased(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(summarize(&[]), Err(NbError::EmptySample));
        assert!(matches!(
            summarize(&[1, -1]),
            Err(NbError::InvalidObservation { index: 1, .. })
        ));
        assert!(matches!(
            summarize_reals(&[0.0, 1.5]),
            Err(NbError::InvalidObservation { index: 1, .. })
        ));
        assert!(matches!(
            summarize_reals(&[f64::NAN]),
            Err(NbError::InvalidObservation { index: 0, .. })
        ));
        assert!(CountSample::from_counts(&[MAX_OBSERVATION + 1]).is_err());
        assert_eq!(
            CountSample::from_frequencies([(3, 0)]),
            Err(NbError::EmptySample)
        );
    }
}
