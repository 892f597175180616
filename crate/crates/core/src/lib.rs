//! Confidence intervals for a scalar parameter that is partially identified by
//! a lower and an upper bound, each estimated by an asymptotically normal
//! estimator.
//!
//! The central construction is the misspecification-adaptive interval
//! [`interval::build_ci_ma`]: the union of the bounds widened by `ĉ` standard
//! errors and a two-sided interval around the precision-weighted average of the
//! bound estimates. The interval is never empty, even when the estimated bounds
//! cross. The critical value `ĉ` comes from [`critical::solve_critical_value`],
//! which concentrates out the unknown interval length using the deterministic
//! coverage engine in [`coverage`].
//!
//! Supporting modules: [`normal`] (scalar and bivariate normal primitives),
//! [`quadrature`] (adaptive Gauss–Kronrod), [`mc`] (Monte Carlo coverage and
//! length laboratory) and [`io`] (file formats and the empirical pipeline).

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod coverage;
pub mod critical;
pub mod error;
pub mod interval;
pub mod io;
pub mod mc;
pub mod normal;
pub mod quadrature;

pub use error::{Error, Result};
