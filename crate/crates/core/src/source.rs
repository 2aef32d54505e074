//! Joint binary memoryless sources and the modulo-2 sum they feed.
//!
//! A [`JointPmf`] over `M` binary sources is a table of `2^M`
//! probabilities indexed by `(s_1, ..., s_M)` read as a binary number with
//! `s_1` most significant. The desired function is always the modulo-2 sum
//! `U = S_1 ⊕ ... ⊕ S_M`.
//!
//! The secrecy condition `P_{S_m U} = P_{S_m} P_U` for every `m` is checked
//! by [`condition_check`]; for two sources it holds exactly for the doubly
//! symmetric family built by [`doubly_symmetric`], which
//! [`theorem2_scan`] verifies empirically.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::rng::{self, tag};

/// Tolerance on the total mass of a [`JointPmf`].
pub const PMF_SUM_TOL: f64 = 1e-12;
/// Tolerance on the total mass of generic probability tables.
pub const TABLE_SUM_TOL: f64 = 1e-9;
/// Default tolerance for structural equality checks.
pub const STRUCTURAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJointPmf")]
pub struct JointPmf {
    #[serde(rename = "M")]
    num_sources: usize,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawJointPmf {
    #[serde(rename = "M")]
    num_sources: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawJointPmf> for JointPmf {
    type Error = Error;

    fn try_from(raw: RawJointPmf) -> Result<Self> {
        JointPmf::new(raw.num_sources, raw.probs)
    }
}

impl JointPmf {
    pub fn new(num_sources: usize, probs: Vec<f64>) -> Result<Self> {
        if num_sources == 0 || num_sources > 20 {
            return Err(Error::InvalidPmf(format!(
                "number of sources must be in 1..=20, got {num_sources}"
            )));
        }
        if probs.len() != 1 << num_sources {
            return Err(Error::InvalidPmf(format!(
                "{} sources need {} probabilities, got {}",
                num_sources,
                1usize << num_sources,
                probs.len()
            )));
        }
        validate_table(&probs, PMF_SUM_TOL)?;
        Ok(Self { num_sources, probs })
    }

    /// Independent sources, source `m` being Bern(`ones[m]`).
    pub fn independent(ones: &[f64]) -> Result<Self> {
        for &p in ones {
            Error::check_prob("Bernoulli parameter", p, 0.0, 1.0)?;
        }
        let m = ones.len();
        let probs = (0..1usize << m)
            .map(|idx| {
                (0..m)
                    .map(|j| {
                        let bit = (idx >> (m - 1 - j)) & 1;
                        if bit == 1 {
                            ones[j]
                        } else {
                            1.0 - ones[j]
                        }
                    })
                    .product()
            })
            .collect();
        Self::new(m, probs)
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of the outcome whose bits form `index` (`s_1` most significant).
    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Bit of source `m` (0-based) in outcome `index`.
    pub fn source_bit(&self, index: usize, m: usize) -> usize {
        (index >> (self.num_sources - 1 - m)) & 1
    }
}

pub(crate) fn validate_table(probs: &[f64], tol: f64) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidPmf("empty table".into()));
    }
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidPmf(format!(
            "entry {bad} is not a probability"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidPmf(format!("entries sum to {total}")));
    }
    Ok(())
}

/// `s_1 ⊕ ... ⊕ s_M`.
pub fn mod2_sum(symbols: &BitVector) -> Result<bool> {
    if symbols.is_empty() {
        return Err(Error::Precondition("modulo-2 sum of no symbols".into()));
    }
    Ok(symbols.weight() % 2 == 1)
}

fn plog2p(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// `H(p) = -p log2 p - (1-p) log2(1-p)` with `0 log2 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    Error::check_prob("p", p, 0.0, 1.0)?;
    Ok(plog2p(p) + plog2p(1.0 - p))
}

/// Shannon entropy in bits of a probability table.
pub fn entropy(pmf: &[f64]) -> Result<f64> {
    validate_table(pmf, TABLE_SUM_TOL)?;
    Ok(pmf.iter().map(|&p| plog2p(p)).sum())
}

/// `P_U` as `[P_U(0), P_U(1)]`.
pub fn function_pmf(joint: &JointPmf) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (idx, &p) in joint.probs.iter().enumerate() {
        out[idx.count_ones() as usize % 2] += p;
    }
    out
}

/// Marginal of source `m` (0-based) as `[P(0), P(1)]`.
pub fn marginal(joint: &JointPmf, m: usize) -> Result<[f64; 2]> {
    if m >= joint.num_sources {
        return Err(Error::IndexOutOfRange {
            index: m,
            len: joint.num_sources,
        });
    }
    let mut out = [0.0; 2];
    for (idx, &p) in joint.probs.iter().enumerate() {
        out[joint.source_bit(idx, m)] += p;
    }
    Ok(out)
}

/// `P_{S_m U}(s, u)` as `table[s][u]`, by enumeration of all outcomes.
pub fn source_function_table(joint: &JointPmf, m: usize) -> Result<[[f64; 2]; 2]> {
    if m >= joint.num_sources {
        return Err(Error::IndexOutOfRange {
            index: m,
            len: joint.num_sources,
        });
    }
    let mut table = [[0.0; 2]; 2];
    for (idx, &p) in joint.probs.iter().enumerate() {
        table[joint.source_bit(idx, m)][idx.count_ones() as usize % 2] += p;
    }
    Ok(table)
}

/// `max_{m,s,u} |P_{S_m U}(s,u) - P_{S_m}(s) P_U(u)|`.
pub fn condition_gap(joint: &JointPmf) -> f64 {
    let p_u = function_pmf(joint);
    let mut gap: f64 = 0.0;
    for m in 0..joint.num_sources {
        let table = source_function_table(joint, m).expect("index in range");
        for row in &table {
            let p_s = row[0] + row[1];
            for (p_su, p_u) in row.iter().zip(p_u) {
                gap = gap.max((p_su - p_s * p_u).abs());
            }
        }
    }
    gap
}

/// Whether every source is independent of the modulo-2 sum, within `tol`.
pub fn condition_check(joint: &JointPmf, tol: f64) -> bool {
    condition_gap(joint) <= tol
}

/// The two-source family with `P(0,0) = P(1,1) = (1-θ)/2` and
/// `P(0,1) = P(1,0) = θ/2`.
pub fn doubly_symmetric(theta: f64) -> Result<JointPmf> {
    Error::check_prob("theta", theta, 0.0, 1.0)?;
    let same = 0.5 * (1.0 - theta);
    let diff = 0.5 * theta;
    JointPmf::new(2, vec![same, diff, diff, same])
}

pub fn is_doubly_symmetric(joint: &JointPmf, tol: f64) -> Result<bool> {
    if joint.num_sources != 2 {
        return Err(Error::Precondition(format!(
            "double symmetry is defined for two sources, got {}",
            joint.num_sources
        )));
    }
    let p = &joint.probs;
    Ok((p[0] - p[3]).abs() <= tol && (p[1] - p[2]).abs() <= tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanDisagreement {
    pub probs: Vec<f64>,
    pub condition: bool,
    pub doubly_symmetric: bool,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub random_trials: usize,
    pub grid_points: usize,
    pub tol: f64,
    pub condition_passed: usize,
    pub condition_failed: usize,
    pub disagreements: Vec<ScanDisagreement>,
    /// Smallest and largest condition gap among PMFs failing the condition.
    pub min_rejected_gap: Option<f64>,
    pub max_rejected_gap: Option<f64>,
    /// Largest `|P_{S_m}(0) - 1/2|` among PMFs passing the condition.
    pub max_accepted_marginal_deviation: Option<f64>,
}

/// Draws a PMF uniformly from the probability simplex with `size` vertices.
pub fn sample_simplex<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..size).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Compares [`condition_check`] against [`is_doubly_symmetric`] on
/// `num_trials` simplex-uniform two-source PMFs plus a 101-point θ grid.
pub fn theorem2_scan(num_trials: usize, seed: u64, tol: f64) -> Theorem2Report {
    theorem2_scan_with(num_trials, seed, tol, &condition_check)
}

/// [`theorem2_scan`] with a substitute condition checker.
pub fn theorem2_scan_with(
    num_trials: usize,
    seed: u64,
    tol: f64,
    checker: &(dyn Fn(&JointPmf, f64) -> bool + Sync),
) -> Theorem2Report {
    const GRID: usize = 101;
    let candidates: Vec<JointPmf> = (0..num_trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::SCAN, i as u64]);
            JointPmf::new(2, sample_simplex(4, &mut r)).expect("normalized draw")
        })
        .chain(
            (0..GRID)
                .into_par_iter()
                .map(|i| doubly_symmetric(i as f64 / (GRID - 1) as f64).expect("grid θ")),
        )
        .collect();

    let outcomes: Vec<(bool, bool, f64, f64)> = candidates
        .par_iter()
        .map(|pmf| {
            let cond = checker(pmf, tol);
            let ds = is_doubly_symmetric(pmf, tol).expect("two sources");
            let gap = condition_gap(pmf);
            let dev = (0..2)
                .map(|m| (marginal(pmf, m).expect("m < 2")[0] - 0.5).abs())
                .fold(0.0, f64::max);
            (cond, ds, gap, dev)
        })
        .collect();

    let mut report = Theorem2Report {
        random_trials: num_trials,
        grid_points: GRID,
        tol,
        condition_passed: 0,
        condition_failed: 0,
        disagreements: Vec::new(),
        min_rejected_gap: None,
        max_rejected_gap: None,
        max_accepted_marginal_deviation: None,
    };
    for (pmf, &(cond, ds, gap, dev)) in candidates.iter().zip(&outcomes) {
        if cond {
            report.condition_passed += 1;
            report.max_accepted_marginal_deviation = Some(
                report
                    .max_accepted_marginal_deviation
                    .map_or(dev, |d| d.max(dev)),
            );
        } else {
            report.condition_failed += 1;
            report.min_rejected_gap = Some(report.min_rejected_gap.map_or(gap, |g| g.min(gap)));
            report.max_rejected_gap = Some(report.max_rejected_gap.map_or(gap, |g| g.max(gap)));
        }
        if cond != ds {
            report.disagreements.push(ScanDisagreement {
                probs: pmf.probs.clone(),
                condition: cond,
                doubly_symmetric: ds,
                gap,
            });
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionScanReport {
    pub num_sources: usize,
    pub trials: usize,
    pub tol: f64,
    pub condition_passed: usize,
    pub min_gap: f64,
}

/// Empirical condition check on simplex-uniform PMFs for any number of
/// sources. Only counts are reported; no structural claim is made.
pub fn condition_scan(
    num_sources: usize,
    num_trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ConditionScanReport> {
    if num_sources == 0 || num_sources > 20 {
        return Err(Error::Precondition(format!(
            "number of sources must be in 1..=20, got {num_sources}"
        )));
    }
    let gaps: Vec<f64> = (0..num_trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::SCAN, num_sources as u64, i as u64]);
            let pmf = JointPmf::new(num_sources, sample_simplex(1 << num_sources, &mut r))
                .expect("normalized draw");
            condition_gap(&pmf)
        })
        .collect();
    Ok(ConditionScanReport {
        num_sources,
        trials: num_trials,
        tol,
        condition_passed: gaps.iter().filter(|&&g| g <= tol).count(),
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// `M` source sequences of a common length `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceBlock {
    sequences: Vec<BitVector>,
}

impl SourceBlock {
    pub fn new(sequences: Vec<BitVector>) -> Result<Self> {
        let Some(first) = sequences.first() else {
            return Err(Error::Precondition(
                "source block needs at least one sequence".into(),
            ));
        };
        let k = first.len();
        for s in &sequences {
            if s.len() != k {
                return Err(Error::DimensionMismatch {
                    op: "source block",
                    expected: k,
                    found: s.len(),
                });
            }
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[BitVector] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `U^k = S_1^k ⊕ ... ⊕ S_M^k`.
    pub fn function_values(&self) -> BitVector {
        let mut u = BitVector::zeros(self.len());
        for s in &self.sequences {
            u.xor_assign(s).expect("equal lengths");
        }
        u
    }
}

/// `k` i.i.d. draws from `joint`.
pub fn sample_block<R: Rng + ?Sized>(
    joint: &JointPmf,
    k: usize,
    rng: &mut R,
) -> Result<SourceBlock> {
    if k == 0 {
        return Err(Error::Precondition(
            "block length k must be at least 1".into(),
        ));
    }
    let dist = WeightedIndex::new(&joint.probs).map_err(|e| Error::InvalidPmf(e.to_string()))?;
    let m = joint.num_sources;
    let mut sequences = vec![BitVector::zeros(k); m];
    for i in 0..k {
        let outcome = dist.sample(rng);
        for (j, seq) in sequences.iter_mut().enumerate() {
            if joint.source_bit(outcome, j) == 1 {
                seq.set(i, true);
            }
        }
    }
    SourceBlock::new(sequences)
}
