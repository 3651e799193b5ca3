//! Food rescue pickup planning.
//!
//! Donor supply is modeled as a peaks-over-threshold process with a
//! generalized Pareto tail ([`evt`], [`supply`]). Donors are grouped into
//! clusters ([`geo`]), and on each simulated day a binary covering
//! knapsack ([`solver`]) picks the cheapest set of clusters whose available
//! supply meets the remaining demand ([`demand`]). [`sim`] runs the daily
//! loop and parameter sweeps.
//!
//! ```
//! use foodrescue::evt::GpdParams;
//!
//! let g = GpdParams::new(0.0, 293.139, 0.205).unwrap();
//! assert!((g.mean().unwrap() - 368.73).abs() < 0.01);
//! ```

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod error;
pub mod evt;
pub mod geo;
pub mod io;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod supply;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
