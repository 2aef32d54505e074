//! Secure computation of the modulo-2 sum over the binary modulo-2 adder
//! multiple-access wiretap channel.
//!
//! The crate builds random linear computation codes, estimates their block
//! error probability by Monte Carlo simulation, computes the eavesdropper's
//! leakage exactly by enumeration, and evaluates the closed-form capacities
//! and separation-based rates for comparison.

pub mod budget;
pub mod channel;
pub mod code;
pub mod error;
pub mod experiment;
pub mod gf2;
pub mod leakage;
pub mod rates;
pub mod rng;
pub mod separation;
pub mod source;

pub use budget::Budget;
pub use error::{Error, Result};
