//! Simulation laboratory for repeated contextual brokerage.
//!
//! A broker posts one price per round to two traders whose valuations share
//! a context-dependent market value. This crate provides:
//!
//! * [`dyadic`]: adaptive dyadic partitions of `[0,1)^d`,
//! * [`distributions`]: piecewise-constant valuation densities,
//! * [`gft`]: exact expected gain from trade, first-best and approximation ratios,
//! * [`learners`]: the bisect-and-average and exploit/explore/bisect learners plus baselines,
//! * [`instances`]: benign and lower-bound lattice environments with model validation,
//! * [`harness`]: episodes, horizon sweeps, log-log slope fits and verification suites.

// Negated comparisons are how NaN inputs get rejected alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod dyadic;
pub mod error;
pub mod gft;
pub mod harness;
pub mod instances;
pub mod learners;
pub mod rng;

pub use error::{Error, Result};
