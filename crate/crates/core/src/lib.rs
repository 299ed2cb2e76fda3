//! Velocity distributions from dual-loop detector traces and the link-lifetime
//! (connectivity duration) laws they induce between same-direction vehicles.
//!
//! Pipeline: [`ingest`] turns transit records into velocities, [`empirical`]
//! provides ECDFs and the CDF-RMSE metric, [`distfit`] holds the parametric
//! families and their fits, [`relvel`] models consecutive-vehicle velocity
//! differences, and [`connectivity`] maps a relative-velocity law onto the
//! distribution of `t_c = 2R/|Δv|`. [`simulate`] is the seeded Monte Carlo
//! oracle and synthetic trace generator.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connectivity;
pub mod distfit;
pub mod empirical;
pub mod error;
pub mod ingest;
pub mod relvel;
pub mod simulate;
pub mod units;

pub use error::{Error, Result};
