//! The binary modulo-2 adder multiple-access wiretap channel.
//!
//! Both receivers see the XOR of all inputs; the legitimate receiver adds
//! Bern(`p`) noise and the eavesdropper Bern(`q`) noise. The two noise
//! sequences are drawn from separate streams and are independent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MawcParams {
    #[serde(rename = "M")]
    pub num_transmitters: usize,
    pub p: f64,
    pub q: f64,
}

impl MawcParams {
    pub fn new(num_transmitters: usize, p: f64, q: f64) -> Result<Self> {
        let params = Self {
            num_transmitters,
            p,
            q,
        };
        params.validate()?;
        Ok(params)
    }

    /// Structural validity: at least one transmitter and `p, q ∈ [0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if self.num_transmitters == 0 {
            return Err(Error::Precondition(
                "at least one transmitter required".into(),
            ));
        }
        Error::check_prob("p", self.p, 0.0, 1.0)?;
        Error::check_prob("q", self.q, 0.0, 1.0)?;
        Ok(())
    }

    /// `p ∈ [0, 1/2]`, as the capacity formulas require.
    pub fn validate_for_capacity(&self) -> Result<()> {
        self.validate()?;
        Error::check_prob("p", self.p, 0.0, 0.5)?;
        Ok(())
    }

    /// Set when `q` lies outside `[0, 1/2]`; such runs are exploratory.
    pub fn q_flagged(&self) -> bool {
        self.q > 0.5
    }
}

pub fn bernoulli_vector<R: Rng + ?Sized>(len: usize, crossover: f64, rng: &mut R) -> BitVector {
    let mut v = BitVector::zeros(len);
    for i in 0..len {
        if rng.random_bool(crossover) {
            v.set(i, true);
        }
    }
    v
}

/// One block over the channel: returns `(y, z)` with
/// `y = x_1 ⊕ ... ⊕ x_M ⊕ n_Y` and `z = x_1 ⊕ ... ⊕ x_M ⊕ n_Z`.
pub fn transmit<R1, R2>(
    inputs: &[BitVector],
    params: &MawcParams,
    noise_y: &mut R1,
    noise_z: &mut R2,
) -> Result<(BitVector, BitVector)>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    params.validate()?;
    if inputs.len() != params.num_transmitters {
        return Err(Error::DimensionMismatch {
            op: "transmit (number of inputs)",
            expected: params.num_transmitters,
            found: inputs.len(),
        });
    }
    let n = inputs[0].len();
    let mut sum = BitVector::zeros(n);
    for x in inputs {
        sum.xor_assign(x)?;
    }
    let y = sum.xor(&bernoulli_vector(n, params.p, noise_y))?;
    let z = sum.xor(&bernoulli_vector(n, params.q, noise_z))?;
    Ok((y, z))
}

/// The product-Bernoulli law of a length-`n` noise sequence.
#[derive(Clone, Debug)]
pub struct NoisePmf {
    n: usize,
    by_weight: Vec<f64>,
}

impl NoisePmf {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `P(e) = c^wt(e) (1-c)^(n-wt(e))` given the weight of `e`.
    pub fn prob_of_weight(&self, weight: usize) -> f64 {
        self.by_weight[weight]
    }

    pub fn prob(&self, e: &BitVector) -> f64 {
        assert_eq!(e.len(), self.n);
        self.by_weight[e.weight()]
    }

    /// Probability of the pattern with integer index `index`.
    pub fn prob_of_index(&self, index: u64) -> f64 {
        self.by_weight[index.count_ones() as usize]
    }

    /// The full table over `{0,1}^n`, indexed as in [`BitVector::from_index`].
    pub fn table(&self) -> Vec<f64> {
        (0..1u64 << self.n).map(|i| self.prob_of_index(i)).collect()
    }
}

/// Exact noise law; `cap` bounds the `2^n` patterns that enumeration over
/// it will touch.
pub fn noise_pmf(crossover: f64, n: usize, cap: u64) -> Result<NoisePmf> {
    Error::check_prob("crossover", crossover, 0.0, 1.0)?;
    let required = 1u128 << n.min(127);
    if n >= 64 || required > cap as u128 {
        return Err(Error::BudgetExceeded {
            what: "noise enumeration",
            required,
            cap,
        });
    }
    let by_weight = (0..=n)
        .map(|w| crossover.powi(w as i32) * (1.0 - crossover).powi((n - w) as i32))
        .collect();
    Ok(NoisePmf { n, by_weight })
}

/// Crossover of BSC(`p`) followed by BSC(`q_prime`): `q'(1-2p) + p`.
pub fn compose_bsc(p: f64, q_prime: f64) -> Result<f64> {
    Error::check_prob("p", p, 0.0, 1.0)?;
    Error::check_prob("q'", q_prime, 0.0, 1.0)?;
    Ok(q_prime * (1.0 - 2.0 * p) + p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NotDegraded {
    /// `p = 1/2`: every eavesdropper channel is a cascade of the legitimate one.
    LegitimateChannelUseless,
    /// The solved `q'` lies outside `(0, 1/2]`.
    OutsideRange { q_prime: f64 },
}

impl std::fmt::Display for NotDegraded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NotDegraded::LegitimateChannelUseless => {
                write!(f, "p = 1/2 leaves q' undetermined")
            }
            NotDegraded::OutsideRange { q_prime } => {
                write!(f, "q' = {q_prime} is outside (0, 1/2]")
            }
        }
    }
}

/// Solves `q = q'(1-2p) + p` for `q'` and accepts it when `q' ∈ (0, 1/2]`.
pub fn degradedness_gap(p: f64, q: f64) -> Result<std::result::Result<f64, NotDegraded>> {
    Error::check_prob("p", p, 0.0, 0.5)?;
    Error::check_prob("q", q, 0.0, 1.0)?;
    if p == 0.5 {
        return Ok(Err(NotDegraded::LegitimateChannelUseless));
    }
    let q_prime = (q - p) / (1.0 - 2.0 * p);
    if q_prime > 0.0 && q_prime <= 0.5 {
        Ok(Ok(q_prime))
    } else {
        Ok(Err(NotDegraded::OutsideRange { q_prime }))
    }
}
