use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable overriding [`Budget::max_terms`].
pub const ENUM_CAP_ENV: &str = "MAWC_ENUM_CAP";

/// Caps on exhaustive work, checked before anything is allocated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Terms an exact leakage enumeration may visit.
    pub max_terms: u64,
    /// Largest dimension a decoder may enumerate (`2^bits` candidates).
    pub max_decoder_bits: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_terms: 1 << 26,
            max_decoder_bits: 20,
        }
    }
}

impl Budget {
    /// Default budget with `max_terms` taken from [`ENUM_CAP_ENV`] when set.
    pub fn from_env() -> Result<Self> {
        let mut budget = Self::default();
        if let Ok(raw) = std::env::var(ENUM_CAP_ENV) {
            budget.max_terms = raw.trim().parse().map_err(|_| {
                Error::Precondition(format!("{ENUM_CAP_ENV}={raw:?} is not a term count"))
            })?;
        }
        Ok(budget)
    }

    /// Fails unless `2^exponent` terms fit under `max_terms`.
    pub fn check_terms(&self, what: &'static str, exponent: usize) -> Result<u64> {
        let required = if exponent >= 127 {
            u128::MAX
        } else {
            1u128 << exponent
        };
        if required > self.max_terms as u128 {
            return Err(Error::BudgetExceeded {
                what,
                required,
                cap: self.max_terms,
            });
        }
        Ok(required as u64)
    }

    /// Fails unless a `2^bits` candidate search is allowed.
    pub fn check_decoder(&self, what: &'static str, bits: usize) -> Result<()> {
        if bits > self.max_decoder_bits as usize || bits >= 63 {
            return Err(Error::BudgetExceeded {
                what,
                required: if bits >= 127 {
                    u128::MAX
                } else {
                    1u128 << bits
                },
                cap: 1u64 << self.max_decoder_bits.min(63),
            });
        }
        Ok(())
    }
}
