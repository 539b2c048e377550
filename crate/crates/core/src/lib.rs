//! Maximum-likelihood fitting of negative binomial count models.
//!
//! The profile likelihood `h(ν) = l(ν, p̂(ν))` with `p̂(ν) = ν/(ν + Ȳ)` reduces
//! NB(ν, p) estimation to a bounded one-dimensional search over ν. This crate
//! provides the special functions, distributions, score functions and
//! maximizer for that problem, together with goodness-of-fit tests, the
//! numeric oracles used to check the limiting behaviour of the score, and the
//! Monte Carlo experiment grids.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apma;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod gof;
pub mod io;
pub mod limits;
pub mod numeric;
pub mod rng;
pub mod sample;
pub mod score;
pub mod special;

pub use apma::{fit_ext_nb, fit_nb, fit_poisson, Branch, FitConfig, FitResult, FittedParams};
pub use dist::{AltKind, AltNBParams, CountLaw, ExtNBParams, NBParams, PoissonParams};
pub use error::{NbError, Result};
pub use gof::{GofConfig, GofResult};
pub use sample::{summarize, CountSample, SimonsenCase};
pub use score::{ScoreContext, ScoreForm};
