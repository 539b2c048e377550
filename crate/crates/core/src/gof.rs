//! Discrete Kolmogorov–Smirnov tests against a fitted NB law.
//!
//! Critical values come from a parametric bootstrap: samples are drawn from
//! the fitted law, refit with the same configuration and their KS statistics
//! pooled. Replicate `b` draws from the stream keyed by `(seed, b)`, so the
//! result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::apma::{fit_nb, FitConfig, FitResult};
use crate::dist::{CdfTable, CountLaw, PoissonParams};
use crate::error::{NbError, Result};
use crate::numeric::{mean, median, quantile_type7};
use crate::rng::{child_seed, stream};
use crate::sample::CountSample;

/// Tail mass left outside the KS scan.
pub const SCAN_TAIL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofConfig {
    pub boot_reps: usize,
    pub level: f64,
    pub seed: u64,
    pub fit_cfg: FitConfig,
}

impl GofConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            boot_reps: 1000,
            level: 0.05,
            seed,
            fit_cfg: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.boot_reps == 0 {
            return Err(NbError::InvalidParameter("boot_reps must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(NbError::InvalidParameter(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        self.fit_cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofResult {
    /// Observed statistic `D_n`.
    pub statistic: f64,
    /// Bootstrap critical value `d_n`.
    pub critical: f64,
    pub p_value: f64,
    pub reject: bool,
    pub fitted: FitResult,
    /// `D*` in replicate order.
    pub boot_stats: Vec<f64>,
    pub seed: u64,
}

/// `max_y |F_n(y) − F̂(y)|` over `0 ≤ y ≤ max(M, fitted 1 − 1e-9 quantile)`.
pub fn ks_statistic(s: &CountSample, law: &CountLaw) -> f64 {
    let table = CdfTable::covering(law, s.max(), SCAN_TAIL);
    ks_against_table(s, &table)
}

/// KS statistic against a precomputed CDF table covering the scan range.
pub fn ks_against_table(s: &CountSample, table: &CdfTable) -> f64 {
    let n = s.n() as f64;
    let mut freq = s.freq().iter().peekable();
    let mut count: u64 = 0;
    let mut sup = 0.0f64;
    for y in 0..table.len() as u64 {
        while let Some((&v, &c)) = freq.peek() {
            if v > y {
                break;
            }
            count += c;
            freq.next();
        }
        let emp = count as f64 / n;
        sup = sup.max((emp - table.at(y)).abs());
    }
    sup
}

/// `sup_y |F_a(y) − F_b(y)|`, scanned until both laws leave less than 1e-12.
pub fn sup_cdf_distance(a: &CountLaw, b: &CountLaw) -> f64 {
    let ta = CdfTable::covering(a, 0, 1e-12);
    let tb = CdfTable::covering(b, ta.len() as u64, 1e-12);
    let len = ta.len().max(tb.len()) as u64;
    (0..len)
        .map(|y| (ta.at(y) - tb.at(y)).abs())
        .fold(0.0, f64::max)
}

/// KS test of the NB fit with a parametric-bootstrap critical value.
///
/// A statistic of exactly zero never rejects, which keeps the degenerate
/// all-zero case (every `D*` equal to 0) from rejecting a perfect fit.
pub fn bootstrap_test(s: &CountSample, cfg: &GofConfig) -> Result<GofResult> {
    cfg.validate()?;
    let fitted = fit_nb(s, &cfg.fit_cfg)?;
    let law = fitted.law();
    let statistic = ks_statistic(s, &law);
    let n = s.n() as usize;
    let boot_stats: Vec<f64> = (0..cfg.boot_reps as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, b);
            let draw = law.sample(n, &mut rng);
            let sample = CountSample::from_counts(&draw).expect("bootstrap sample is valid");
            match fit_nb(&sample, &cfg.fit_cfg) {
                Ok(refit) => ks_statistic(&sample, &refit.law()),
                Err(_) => f64::NAN,
            }
        })
        .collect();
    let mut sorted: Vec<f64> = boot_stats.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(NbError::Precision("no bootstrap replicate produced a statistic".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let critical = quantile_type7(&sorted, 1.0 - cfg.level);
    let exceed = sorted.iter().filter(|&&v| v >= statistic).count();
    let p_value = (1 + exceed) as f64 / (sorted.len() + 1) as f64;
    Ok(GofResult {
        statistic,
        critical,
        p_value,
        reject: statistic > 0.0 && statistic >= critical,
        fitted,
        boot_stats,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReplicate {
    pub nu_hat: f64,
    pub p_hat: f64,
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSummary {
    pub lambda: f64,
    pub n: usize,
    pub reps: usize,
    pub median_nu: f64,
    pub mean_nu: f64,
    pub median_p: f64,
    pub median_statistic: f64,
    pub median_critical: f64,
    pub mean_statistic: f64,
    pub mean_critical: f64,
    /// Fraction of replicates rejecting the NB null.
    pub power: f64,
    pub boundary_fraction: f64,
    pub replicates: Vec<PowerReplicate>,
}

/// Repeats the bootstrap KS test on Poisson(λ) samples of size n.
///
/// Replicate r samples from stream `(seed, r)` and bootstraps with seed
/// `child_seed(seed, r)`.
pub fn power_experiment(lambda: f64, n: usize, reps: usize, cfg: &GofConfig) -> Result<PowerSummary> {
    cfg.validate()?;
    let pois = CountLaw::Poisson(PoissonParams::new(lambda)?);
    if n == 0 || reps == 0 {
        return Err(NbError::InvalidParameter("n and reps must be positive".into()));
    }
    let replicates: Vec<PowerReplicate> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<PowerReplicate> {
            let mut rng = stream(cfg.seed, r);
            let sample = CountSample::from_counts(&pois.sample(n, &mut rng))?;
            let inner = GofConfig {
                seed: child_seed(cfg.seed, r),
                ..*cfg
            };
            let res = bootstrap_test(&sample, &inner)?;
            Ok(PowerReplicate {
                nu_hat: res.fitted.nu_hat().unwrap_or(f64::NAN),
                p_hat: res.fitted.p_hat(),
                statistic: res.statistic,
                critical: res.critical,
                reject: res.reject,
                at_boundary: res.fitted.at_boundary,
            })
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&PowerReplicate) -> f64| replicates.iter().map(f).collect::<Vec<f64>>();
    let nus = col(|r| r.nu_hat);
    let stats = col(|r| r.statistic);
    let crits = col(|r| r.critical);
    let frac = |f: fn(&PowerReplicate) -> bool| {
        replicates.iter().filter(|r| f(r)).count() as f64 / reps as f64
    };
    Ok(PowerSummary {
        lambda,
        n,
        reps,
        median_nu: median(&nus),
        mean_nu: mean(&nus),
        median_p: median(&col(|r| r.p_hat)),
        median_statistic: median(&stats),
        median_critical: median(&crits),
        mean_statistic: mean(&stats),
        mean_critical: mean(&crits),
        power: frac(|r| r.reject),
        boundary_fraction: frac(|r| r.at_boundary),
        replicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticRow {
    pub n: usize,
    pub median_statistic: f64,
    /// Median of `sup_y |F_θ̂(y) − F_λ(y)|`.
    pub median_fit_distance: f64,
}

/// Median `D_n` and fitted-versus-true CDF distance for each n; no bootstrap.
///
/// Rows for different n use independent stream families keyed by n.
pub fn asymptotic_check(
    lambda: f64,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    fit_cfg: &FitConfig,
) -> Result<Vec<AsymptoticRow>> {
    fit_cfg.validate()?;
    let pois = CountLaw::Poisson(PoissonParams::new(lambda)?);
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NbError::InvalidParameter("n_grid must be increasing".into()));
    }
    n_grid
        .iter()
        .map(|&n| {
            let family = child_seed(seed, n as u64);
            let pairs: Vec<(f64, f64)> = (0..reps as u64)
                .into_par_iter()
                .map(|r| -> Result<(f64, f64)> {
                    let mut rng = stream(family, r);
                    let sample = CountSample::from_counts(&pois.sample(n, &mut rng))?;
                    let law = fit_nb(&sample, fit_cfg)?.law();
                    Ok((ks_statistic(&sample, &law), sup_cdf_distance(&law, &pois)))
                })
                .collect::<Result<_>>()?;
            let (ds, dist): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Ok(AsymptoticRow {
                n,
                median_statistic: median(&ds),
                median_fit_distance: median(&dist),
            })
        })
        .collect()
}

/// True when each value is at most `(1 + slack)` times its predecessor.
pub fn nonincreasing_with_slack(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}
