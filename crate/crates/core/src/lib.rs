//! Cyber loss modelling and optimal cybersecurity provisioning under a
//! Bonus-Malus cyber insurance contract.
//!
//! The crate is layered bottom-up:
//!
//! - [`severity`]: truncated g-and-h and log-normal event severities.
//! - [`compound`]: aggregate annual losses by FFT with exponential tilting,
//!   and layer expectations on the resulting grid.
//! - [`contract`]: Bonus-Malus rules, schedules, state transition and cost.
//! - [`solver`]: backward induction for the insured's optimal policy,
//!   with kernels, occupancy probabilities and aggregate quantities.
//! - [`simulation`]: forward Monte Carlo of the controlled process.
//! - [`sweep`]: experiment configuration and premium sweeps.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Quadrature and inverse-normal coefficients are quoted as published.
#![allow(clippy::excessive_precision)]

pub mod compound;
pub mod contract;
pub mod error;
pub mod normal;
pub mod quadrature;
pub mod severity;
pub mod simulation;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
