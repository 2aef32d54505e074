//! Closed-form capacities and separation-based rates.
//!
//! Rates are in function values per channel use. A zero-entropy function
//! (constant `U`) needs no channel uses at all; such inputs yield
//! [`Rate::ConstantFunction`] rather than an infinity.

use serde::{Deserialize, Serialize};

use crate::channel::{degradedness_gap, NotDegraded};
use crate::error::{Error, Result};
use crate::source::binary_entropy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    Finite(f64),
    ConstantFunction,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        match self {
            Rate::Finite(v) => Some(*v),
            Rate::ConstantFunction => None,
        }
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rate::Finite(v) => write!(f, "{v:.16e}"),
            Rate::ConstantFunction => f.write_str("degenerate"),
        }
    }
}

/// `(p, q, θ, H(U))` for the rate functions below.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub h_u: f64,
}

impl RateQuery {
    /// Two-source doubly symmetric query with `H(U) = H(θ)`.
    pub fn doubly_symmetric(p: f64, q: f64, theta: f64) -> Result<Self> {
        Error::check_prob("theta", theta, 0.0, 1.0)?;
        let query = Self {
            p,
            q,
            theta,
            h_u: binary_entropy(theta)?,
        };
        query.validate()?;
        Ok(query)
    }

    pub fn validate(&self) -> Result<()> {
        Error::check_prob("p", self.p, 0.0, 0.5)?;
        Error::check_prob("q", self.q, 0.0, 1.0)?;
        Error::check_prob("theta", self.theta, 0.0, 1.0)?;
        Error::check_prob("H(U)", self.h_u, 0.0, 1.0)?;
        Ok(())
    }
}

fn capacity_over_entropy(p: f64, h_u: f64) -> Result<Rate> {
    Error::check_prob("p", p, 0.0, 0.5)?;
    Error::check_prob("H(U)", h_u, 0.0, 1.0)?;
    if h_u == 0.0 {
        return Ok(Rate::ConstantFunction);
    }
    Ok(Rate::Finite((1.0 - binary_entropy(p)?) / h_u))
}

/// `C_c = (1 - H(p)) / H(U)`.
pub fn computation_capacity(p: f64, h_u: f64) -> Result<Rate> {
    capacity_over_entropy(p, h_u)
}

/// Secrecy computation-capacity of the modulo-2 sum. It coincides with
/// [`computation_capacity`] and does not depend on `q`, provided every
/// source is independent of the sum (see [`crate::source::condition_check`]).
pub fn secrecy_computation_capacity(p: f64, h_u: f64) -> Result<Rate> {
    capacity_over_entropy(p, h_u)
}

/// Best separation rate without secrecy: `(1/2) (1 - H(p)) / H(θ)`.
pub fn separation_computation_rate(p: f64, theta: f64) -> Result<Rate> {
    Error::check_prob("theta", theta, 0.0, 1.0)?;
    Ok(match computation_capacity(p, binary_entropy(theta)?)? {
        Rate::Finite(v) => Rate::Finite(0.5 * v),
        Rate::ConstantFunction => Rate::ConstantFunction,
    })
}

/// Best separation rate with secrecy: `(1/2) (H(q) - H(p)) / H(θ)`,
/// defined when the eavesdropper channel is a degraded cascade
/// `q = q'(1-2p) + p` with `q' ∈ (0, 1/2]`.
pub fn separation_secrecy_rate(p: f64, q: f64, theta: f64) -> Result<Rate> {
    Error::check_prob("p", p, 0.0, 0.5)?;
    Error::check_prob("theta", theta, 0.0, 1.0)?;
    if p >= 0.5 {
        return Err(Error::Precondition(format!(
            "separation secrecy rate needs p < 1/2, got {p}"
        )));
    }
    if let Err(why) = degradedness_gap(p, q)? {
        return Err(degradation_error(p, q, why));
    }
    let h_theta = binary_entropy(theta)?;
    if h_theta == 0.0 {
        return Ok(Rate::ConstantFunction);
    }
    Ok(Rate::Finite(
        0.5 * (binary_entropy(q)? - binary_entropy(p)?) / h_theta,
    ))
}

pub(crate) fn degradation_error(p: f64, q: f64, why: NotDegraded) -> Error {
    Error::Precondition(format!(
        "eavesdropper channel q={q} is not a degraded cascade of p={p}: {why}"
    ))
}

/// Secrecy capacity of the BSC wiretap channel, `max(H(q) - H(p), 0)`.
/// The flag is set when `H(q) < H(p)` and the value was clipped to zero.
pub fn bsc_wiretap_secrecy_capacity(p: f64, q: f64) -> Result<(f64, bool)> {
    let diff = binary_entropy(q)? - binary_entropy(p)?;
    Ok(if diff < 0.0 {
        (0.0, true)
    } else {
        (diff, false)
    })
}
