//! Truth inference for crowdsourced categorical answers that separates
//! question difficulty from question subjectivity.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm:
//! the response model and its alternating Gibbs/L-BFGS fit, majority vote,
//! GLAD and Dawid-Skene baselines, K-means worker grouping, Monte Carlo
//! subjectivity estimation, held-out validation and the synthetic data
//! generators. File formats and the command-line driver live in the
//! `crowdtruth` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod baselines;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod link;
pub mod math;
pub mod optimizer;
pub mod rng;
pub mod sdr;
pub mod subjectivity;
pub mod synth;

pub use error::{Error, Result};
