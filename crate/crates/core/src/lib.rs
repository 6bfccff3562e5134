//! Joint power allocation and user scheduling for multiuser SWIPT downlinks.
//!
//! A base station serves `K` single-antenna users over `T` time slots. In each
//! slot one user decodes information while the others harvest energy from the
//! same signal. Harvesting receivers follow a logistic RF-to-DC conversion
//! curve ([`eh_model`]), which makes total harvested power a sum of ratios in
//! the transmit powers. [`solver::solve`] finds a fixed point of the
//! parametric subtractive reformulation with a damped Newton outer loop and a
//! dual-decomposition inner solver ([`inner`]).
//!
//! The [`baseline`] module provides the linear-model allocation used for
//! comparison, [`oracle`] a brute-force enumeration for small instances, and
//! [`experiments`] the Monte-Carlo sweeps behind the `swipt-alloc` binary.

pub mod baseline;
pub mod channel;
pub mod eh_model;
mod error;
pub mod experiments;
pub mod inner;
pub mod oracle;
pub mod problem;
mod roots;
pub mod solver;
pub mod units;

pub use error::{Error, Result};
pub use problem::{AllocationSolution, ProblemInstance, UserSlotMatrix};
