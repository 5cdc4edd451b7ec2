//! Finite-horizon regret-optimal estimation and control synthesis.
//!
//! The crate builds causal filters and controllers for linear time-varying
//! systems whose worst-case *regret* against the clairvoyant (noncausal)
//! policy is minimized. The synthesis pipeline is recursion-based and runs
//! in O(T) time; dense block-operator comparators are provided as oracles
//! for validation and for the noncausal benchmarks themselves.

pub mod augment;
pub mod bench;
pub mod error;
pub mod factorization;
pub mod hinf;
pub mod linalg;
pub mod noncausal;
pub mod nonlinear;
pub mod operators;
pub mod regret_controller;
pub mod regret_filter;
pub mod system;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
