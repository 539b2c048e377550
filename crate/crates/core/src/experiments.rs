//! Monte Carlo experiment grids: fit reliability, accuracy against the grid
//! oracle, timing, and the probability of sample overdispersion.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;

use crate::apma::{fit_ext_nb, fit_nb, grid_oracle, FitConfig};
use crate::dist::{CountLaw, NBParams, PoissonParams};
use crate::error::{NbError, Result};
use crate::numeric::mean;
use crate::rng::{child_seed, stream};
use crate::sample::CountSample;

pub const DEFAULT_NU: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_P: [f64; 5] = [0.99, 0.9, 0.5, 0.1, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nu_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl GridSpec {
    /// The 25 (ν, p) pairs ν ∈ {0.01, 0.1, 1, 10, 100}, p ∈ {0.99, 0.9, 0.5, 0.1, 0.01}.
    pub fn default25(n_values: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            nu_values: DEFAULT_NU.to_vec(),
            p_values: DEFAULT_P.to_vec(),
            n_values,
            reps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: &f64| v.is_finite() && *v > 0.0;
        if self.nu_values.is_empty() || !self.nu_values.iter().all(pos) {
            return Err(NbError::InvalidParameter("nu values must be positive".into()));
        }
        if self.p_values.is_empty() || !self.p_values.iter().all(|&p| p > 0.0 && p < 1.0) {
            return Err(NbError::InvalidParameter("p values must lie in (0, 1)".into()));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(NbError::InvalidParameter("n values must be positive".into()));
        }
        if self.reps == 0 {
            return Err(NbError::InvalidParameter("reps must be positive".into()));
        }
        Ok(())
    }

    /// `(ν, p, n)` in row order.
    pub fn cells(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for &n in &self.n_values {
            for &nu in &self.nu_values {
                for &p in &self.p_values {
                    out.push((nu, p, n));
                }
            }
        }
        out
    }
}

/// One replicate of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridReplicate {
    pub nb_failed: bool,
    pub ext_failed: bool,
    pub converged: bool,
    pub at_boundary: bool,
    /// `exp(h_oracle − h_apma)`.
    pub ratio: f64,
    pub seconds: f64,
    pub sample_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub nu: f64,
    pub p: f64,
    pub n: usize,
    pub reps: usize,
    pub nb_failure_rate: f64,
    pub ext_failure_rate: f64,
    pub nonconverged: usize,
    pub boundary_hits: usize,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub mean_seconds: f64,
    pub mean_sample_mean: f64,
    pub replicates: Vec<GridReplicate>,
}

fn run_replicate(sample: &CountSample, cfg: &FitConfig, oracle_points: usize) -> GridReplicate {
    let start = Instant::now();
    let nb = catch_unwind(AssertUnwindSafe(|| fit_nb(sample, cfg)));
    let seconds = start.elapsed().as_secs_f64();
    let ext = catch_unwind(AssertUnwindSafe(|| fit_ext_nb(sample, cfg)));
    let finite = |r: &crate::apma::FitResult| {
        r.loglik.is_finite() && r.p_hat().is_finite() && r.mean_hat().is_finite()
    };
    let (nb_ok, converged, at_boundary, h_apma) = match &nb {
        Ok(Ok(r)) if finite(r) => (true, r.converged, r.at_boundary, r.loglik),
        _ => (false, false, false, f64::NAN),
    };
    let ext_ok = matches!(&ext, Ok(Ok(r)) if finite(r));
    let (_, h_oracle) = grid_oracle(sample, cfg, oracle_points);
    GridReplicate {
        nb_failed: !nb_ok,
        ext_failed: !ext_ok,
        converged,
        at_boundary,
        ratio: (h_oracle - h_apma).exp(),
        seconds,
        sample_mean: sample.mean(),
    }
}

/// Runs every cell of the grid. Cell c, replicate r draws from stream
/// `(child_seed(seed, c), r)`.
pub fn run_grid(spec: &GridSpec, cfg: &FitConfig, oracle_points: usize) -> Result<Vec<GridCell>> {
    spec.validate()?;
    cfg.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..spec.reps as u64).map(move |r| (c, r)))
        .collect();
    let results: Vec<GridReplicate> = jobs
        .par_iter()
        .map(|&(c, r)| -> Result<GridReplicate> {
            let (nu, p, n) = cells[c];
            let law = CountLaw::Nb(NBParams::new(nu, p)?);
            let mut rng = stream(child_seed(spec.seed, c as u64), r);
            let sample = CountSample::from_counts(&law.sample(n, &mut rng))?;
            Ok(run_replicate(&sample, cfg, oracle_points))
        })
        .collect::<Result<_>>()?;

    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(nu, p, n))| {
            let reps = &results[c * spec.reps..(c + 1) * spec.reps];
            let k = spec.reps as f64;
            let ratios: Vec<f64> = reps.iter().map(|r| r.ratio).collect();
            GridCell {
                nu,
                p,
                n,
                reps: spec.reps,
                nb_failure_rate: reps.iter().filter(|r| r.nb_failed).count() as f64 / k,
                ext_failure_rate: reps.iter().filter(|r| r.ext_failed).count() as f64 / k,
                nonconverged: reps.iter().filter(|r| !r.converged).count(),
                boundary_hits: reps.iter().filter(|r| r.at_boundary).count(),
                mean_ratio: mean(&ratios),
                max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_seconds: mean(&reps.iter().map(|r| r.seconds).collect::<Vec<_>>()),
                mean_sample_mean: mean(&reps.iter().map(|r| r.sample_mean).collect::<Vec<_>>()),
                replicates: reps.to_vec(),
            }
        })
        .collect())
}

/// Formats a number with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=9).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// CSV rendering of grid results, optionally with the timing column.
pub fn grid_csv(cells: &[GridCell], with_timing: bool) -> String {
    let mut out = String::from(
        "nu,p,n,reps,nb_failure_rate,ext_failure_rate,nonconverged,boundary_hits,mean_ratio,max_ratio,mean_sample_mean",
    );
    if with_timing {
        out.push_str(",mean_seconds");
    }
    out.push('\n');
    for c in cells {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            sig6(c.nu),
            sig6(c.p),
            c.n,
            c.reps,
            sig6(c.nb_failure_rate),
            sig6(c.ext_failure_rate),
            c.nonconverged,
            c.boundary_hits,
            sig6(c.mean_ratio),
            sig6(c.max_ratio),
            sig6(c.mean_sample_mean)
        );
        if with_timing {
            let _ = write!(out, ",{}", sig6(c.mean_seconds));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionRow {
    pub lambda: f64,
    pub n: usize,
    pub reps: usize,
    /// Fraction of Poisson samples with `S_n² > Ȳ`.
    pub probability: f64,
}

/// Estimates `P(S_n² > Ȳ)` under Poisson(λ) for every (λ, n).
pub fn dispersion_probability(
    lambda_values: &[f64],
    n_values: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<DispersionRow>> {
    if reps == 0 || n_values.contains(&0) {
        return Err(NbError::InvalidParameter("n and reps must be positive".into()));
    }
    let mut cells = Vec::new();
    for &lambda in lambda_values {
        for &n in n_values {
            cells.push((lambda, n));
        }
    }
    cells
        .iter()
        .enumerate()
        .map(|(c, &(lambda, n))| {
            let law = CountLaw::Poisson(PoissonParams::new(lambda)?);
            let family = child_seed(seed, c as u64);
            let hits: usize = (0..reps as u64)
                .into_par_iter()
                .map(|r| -> Result<usize> {
                    let mut rng = stream(family, r);
                    let s = CountSample::from_counts(&law.sample(n, &mut rng))?;
                    Ok(usize::from(s.dispersion() == std::cmp::Ordering::Greater))
                })
                .sum::<Result<usize>>()?;
            Ok(DispersionRow {
                lambda,
                n,
                reps,
                probability: hits as f64 / reps as f64,
            })
        })
        .collect()
}

pub fn dispersion_csv(rows: &[DispersionRow]) -> String {
    let mut out = String::from("lambda,n,reps,probability\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", sig6(r.lambda), r.n, r.reps, sig6(r.probability));
    }
    out
}
