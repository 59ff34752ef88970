//! Random-conductance laboratory.
//!
//! Simulation and exact-computation toolkit for nearest-neighbor random
//! walks on `Z^d` driven by i.i.d. bond conductances in `(0, 1]` with a
//! polynomial lower tail. The crate provides:
//!
//! - reproducible sampling and storage of conductance fields
//!   ([`environment`]),
//! - exact n-step heat kernels by sparse mass propagation and the two-step
//!   chain on the even sublattice ([`kernel`]),
//! - Monte Carlo trajectory experiments: boundary hitting times, box-exit
//!   probabilities, trap sojourns ([`walker`]),
//! - trap-pattern detection and the closed-form trap probability `q_N`
//!   ([`traps`]),
//! - isoperimetric profiles of finite reversible chains and the
//!   evolving-set heat-kernel threshold ([`isoperimetry`]),
//! - log-log decay fitting and comparison against the theoretical exponent
//!   windows ([`analysis`]).

pub mod analysis;
pub mod environment;
pub mod error;
pub mod isoperimetry;
pub mod kernel;
pub mod lattice;
pub mod rng;
pub mod stats;
pub mod traps;
pub mod walker;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
