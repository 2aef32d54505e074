//! Exact eavesdropper leakage by enumeration.
//!
//! For a fixed public code the eavesdropper sees `z = c(u) ⊕ n_Z` where
//! `c(u)` is the common codeword of the function sequence. The joint law
//! of `(S_m^k, Z^n)` is assembled exactly from the source PMF and the
//! product-Bernoulli noise law, and the mutual information is read off
//! that table. Nothing here is estimated.

use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::channel::{noise_pmf, NoisePmf};
use crate::code::CompCode;
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::source::{entropy, function_pmf, validate_table, JointPmf, TABLE_SUM_TOL};

/// Negative mutual information down to this value is treated as rounding.
pub const NEGATIVE_MI_CLAMP: f64 = 1e-12;
/// Slack allowed in the data-processing sanity checks.
const SANITY_SLACK: f64 = 1e-9;

/// A joint probability table, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "joint table",
                expected: rows * cols,
                found: probs.len(),
            });
        }
        validate_table(&probs, TABLE_SUM_TOL)?;
        Ok(Self { rows, cols, probs })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidPmf("ragged joint table".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.cols + y]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.probs
            .chunks(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.probs.chunks(self.cols) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }
}

/// `I(X;Y)` in bits.
pub fn mutual_information(table: &JointTable) -> Result<f64> {
    let px = table.row_marginal();
    let py = table.col_marginal();
    let mut mi = 0.0;
    for (x, row) in table.probs.chunks(table.cols).enumerate() {
        for (y, &pxy) in row.iter().enumerate() {
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[x] * py[y])).log2();
            }
        }
    }
    if mi < 0.0 {
        if mi >= -NEGATIVE_MI_CLAMP {
            return Ok(0.0);
        }
        return Err(Error::InternalConsistency(format!(
            "mutual information {mi} is negative beyond rounding"
        )));
    }
    Ok(mi)
}

/// How the common function sequence is put on the channel.
#[derive(Clone, Copy, Debug)]
pub enum Scheme<'a> {
    /// `x_m = s_m`, so `n = k`.
    Uncoded,
    /// `x_m = A B s_m`.
    Coded(&'a CompCode),
}

impl Scheme<'_> {
    fn n(&self, k: usize) -> usize {
        match self {
            Scheme::Uncoded => k,
            Scheme::Coded(c) => c.n(),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if let Scheme::Coded(c) = self {
            if c.k() != k {
                return Err(Error::DimensionMismatch {
                    op: "leakage (code k)",
                    expected: k,
                    found: c.k(),
                });
            }
        }
        Ok(())
    }

    /// Channel word index of `u` for each `u ∈ {0,1}^k`.
    fn codeword_indices(&self, k: usize) -> Result<Vec<u64>> {
        (0..1u64 << k)
            .map(|u| match self {
                Scheme::Uncoded => Ok(u),
                Scheme::Coded(c) => Ok(c.encode(&BitVector::from_index(u, k))?.to_index()),
            })
            .collect()
    }
}

/// Accumulates `P(row, z) = Σ prob · P_N(z ⊕ word)` over `(row, word, prob)`
/// entries into a `rows × 2^n` table.
pub(crate) fn table_through_noise<I>(
    rows: usize,
    noise: &NoisePmf,
    entries: I,
) -> Result<JointTable>
where
    I: IntoIterator<Item = (usize, u64, f64)>,
{
    let cols = 1usize << noise.n();
    let mut probs = vec![0.0; rows * cols];
    let noise_table = noise.table();
    for (row, word, prob) in entries {
        if prob == 0.0 {
            continue;
        }
        let dst = &mut probs[row * cols..(row + 1) * cols];
        for (z, d) in dst.iter_mut().enumerate() {
            *d += prob * noise_table[(z as u64 ^ word) as usize];
        }
    }
    JointTable::new(rows, cols, probs)
}

/// Exact `P(S_m^k, U^k)` for every source `m`, each a `2^k × 2^k` table
/// flattened row-major, from enumerating all `2^{Mk}` source tuples.
fn source_function_tables(joint: &JointPmf, k: usize) -> Vec<Vec<f64>> {
    let m_count = joint.num_sources();
    let size = 1usize << k;
    let mut tables = vec![vec![0.0; size * size]; m_count];
    let digit_mask = (1usize << m_count) - 1;
    for tuple in 0..1usize << (m_count * k) {
        let mut prob = 1.0;
        let mut s_idx = vec![0usize; m_count];
        let mut u_idx = 0usize;
        for i in 0..k {
            let outcome = (tuple >> (m_count * (k - 1 - i))) & digit_mask;
            prob *= joint.prob(outcome);
            u_idx = (u_idx << 1) | (outcome.count_ones() as usize & 1);
            for (m, s) in s_idx.iter_mut().enumerate() {
                *s = (*s << 1) | joint.source_bit(outcome, m);
            }
        }
        if prob == 0.0 {
            continue;
        }
        for (m, table) in tables.iter_mut().enumerate() {
            table[s_idx[m] * size + u_idx] += prob;
        }
    }
    tables
}

fn check_scheme_budget(
    scheme: &Scheme,
    joint: &JointPmf,
    k: usize,
    budget: &Budget,
) -> Result<usize> {
    scheme.check(k)?;
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let n = scheme.n(k);
    budget.check_terms("exact source leakage", joint.num_sources() * k + n)?;
    Ok(n)
}

fn source_leakage_from_table(
    table: &[f64],
    codewords: &[u64],
    noise: &NoisePmf,
    k: usize,
) -> Result<f64> {
    let size = 1usize << k;
    let entries = (0..size).flat_map(|s| (0..size).map(move |u| (s, u)));
    let joint = table_through_noise(
        size,
        noise,
        entries.map(|(s, u)| (s, codewords[u], table[s * size + u])),
    )?;
    let mi = mutual_information(&joint)?;
    let h_s = entropy(&joint.row_marginal())?;
    let n = noise.n() as f64;
    if mi > h_s + SANITY_SLACK || mi > n + SANITY_SLACK {
        return Err(Error::InternalConsistency(format!(
            "leakage {mi} exceeds H(S^k) = {h_s} or n = {n}"
        )));
    }
    Ok(mi)
}

/// `I(S_m^k; Z^n)` for source `m` (0-based) and eavesdropper crossover `q`.
pub fn exact_source_leakage(
    scheme: Scheme,
    joint: &JointPmf,
    q: f64,
    m: usize,
    k: usize,
    budget: &Budget,
) -> Result<f64> {
    if m >= joint.num_sources() {
        return Err(Error::IndexOutOfRange {
            index: m,
            len: joint.num_sources(),
        });
    }
    let n = check_scheme_budget(&scheme, joint, k, budget)?;
    let noise = noise_pmf(q, n, budget.max_terms)?;
    let codewords = scheme.codeword_indices(k)?;
    let tables = source_function_tables(joint, k);
    source_leakage_from_table(&tables[m], &codewords, &noise, k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub per_source_bits: Vec<f64>,
    pub total_bits: f64,
    pub function_leakage_bits: f64,
    pub enumeration_cost: u64,
}

/// Every `I(S_m^k; Z^n)`, their sum, and `I(U^k; Z^n)`.
pub fn exact_total_leakage(
    scheme: Scheme,
    joint: &JointPmf,
    q: f64,
    k: usize,
    budget: &Budget,
) -> Result<LeakageReport> {
    let n = check_scheme_budget(&scheme, joint, k, budget)?;
    let noise = noise_pmf(q, n, budget.max_terms)?;
    let codewords = scheme.codeword_indices(k)?;
    let tables = source_function_tables(joint, k);
    let per_source_bits = tables
        .iter()
        .map(|t| source_leakage_from_table(t, &codewords, &noise, k))
        .collect::<Result<Vec<_>>>()?;
    let total_bits = per_source_bits.iter().sum();
    let function_leakage_bits = exact_function_leakage(scheme, joint, q, k, budget)?;
    let m = joint.num_sources() as u64;
    let enumeration_cost =
        (1u64 << (m as usize * k)) + m * (1u64 << (2 * k + n)) + (1u64 << (k + n));
    Ok(LeakageReport {
        per_source_bits,
        total_bits,
        function_leakage_bits,
        enumeration_cost,
    })
}

/// `I(U^k; Z^n)`, the leakage about the function sequence alone.
pub fn exact_function_leakage(
    scheme: Scheme,
    joint: &JointPmf,
    q: f64,
    k: usize,
    budget: &Budget,
) -> Result<f64> {
    scheme.check(k)?;
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let n = scheme.n(k);
    budget.check_terms("exact function leakage", k + n)?;
    let noise = noise_pmf(q, n, budget.max_terms)?;
    let codewords = scheme.codeword_indices(k)?;
    let p_u = function_pmf(joint);
    let entries = (0..1usize << k).map(|u| {
        let w = u.count_ones() as i32;
        let prob = p_u[1].powi(w) * p_u[0].powi(k as i32 - w);
        (u, codewords[u], prob)
    });
    let table = table_through_noise(1 << k, &noise, entries)?;
    mutual_information(&table)
}
