//! Separation baseline for two terminals.
//!
//! Both terminals compress their source block with the same linear map
//! (Körner-Marton), so the XOR of the two compressions is the compression
//! of `u = s_1 ⊕ s_2`. Each compression is then put on the channel in its
//! own time slot, optionally through a linear random-binning wiretap code
//! `x = G (msg ∥ r)` with uniform local randomness `r`. Slots alternate
//! strictly: even channel uses carry terminal 1, odd ones terminal 2, and
//! the silent terminal sends 0.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::channel::{noise_pmf, transmit, MawcParams, NoisePmf};
use crate::code::{coset_decode, ml_bsc_decode, ErrorEstimate};
use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, BitVector};
use crate::leakage::{mutual_information, table_through_noise, JointTable};
use crate::rates::{separation_computation_rate, separation_secrecy_rate, Rate};
use crate::rng::{self, tag};
use crate::source::{doubly_symmetric, sample_block, JointPmf};

/// Redraws allowed when rejection-sampling a full-rank matrix.
const MAX_REDRAWS: usize = 10_000;

fn full_rank_matrix<R, F>(rows: usize, cols: usize, rng: &mut R, mut accept: F) -> Result<BitMatrix>
where
    R: Rng + ?Sized,
    F: FnMut(&BitMatrix) -> bool,
{
    for _ in 0..MAX_REDRAWS {
        let m = BitMatrix::random(rows, cols, rng);
        if accept(&m) {
            return Ok(m);
        }
    }
    Err(Error::Precondition(format!(
        "no acceptable {rows}x{cols} matrix after {MAX_REDRAWS} draws"
    )))
}

/// Körner-Marton compressor shared by both terminals.
#[derive(Clone, Debug, PartialEq)]
pub struct KmCode {
    matrix: BitMatrix,
}

impl KmCode {
    /// `matrix` is `ℓ' × k`.
    pub fn new(matrix: BitMatrix) -> Self {
        Self { matrix }
    }

    /// Uniform `ℓ' × k` matrix conditioned on rank `min(ℓ', k)`.
    pub fn random<R: Rng + ?Sized>(k: usize, km_len: usize, rng: &mut R) -> Result<Self> {
        let target = k.min(km_len);
        full_rank_matrix(km_len, k, rng, |m| m.rank() == target).map(Self::new)
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.matrix
    }

    pub fn k(&self) -> usize {
        self.matrix.cols()
    }

    pub fn km_len(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn km_compress(code: &KmCode, s: &BitVector) -> Result<BitVector> {
    code.matrix.mul_vec(s)
}

/// Most likely `u` with `B u = w` for `u` i.i.d. Bern(`theta`), with the
/// same tie and fallback rules as the computation code's outer decoder.
pub fn km_decode(code: &KmCode, w: &BitVector, theta: f64, budget: &Budget) -> Result<BitVector> {
    coset_decode(&code.matrix, w, theta, budget)
}

/// Linear random binning: `x = G (msg ∥ r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WiretapBinningCode {
    g: BitMatrix,
    msg_len: usize,
    rand_len: usize,
}

impl WiretapBinningCode {
    pub fn new(g: BitMatrix, msg_len: usize, rand_len: usize) -> Result<Self> {
        if msg_len + rand_len != g.cols() {
            return Err(Error::DimensionMismatch {
                op: "wiretap code (msg_len + rand_len)",
                expected: g.cols(),
                found: msg_len + rand_len,
            });
        }
        Ok(Self {
            g,
            msg_len,
            rand_len,
        })
    }

    /// Draws the message columns, then the randomness columns, each part
    /// conditioned on full rank, the randomness part also on `G` as a whole
    /// having full rank. Redrawing only the randomness part keeps the
    /// message columns identical for every `rand_len` under one stream
    /// pair, so runs with and without the binning layer are paired.
    pub fn random<R1, R2>(
        n: usize,
        msg_len: usize,
        rand_len: usize,
        msg_rng: &mut R1,
        rand_rng: &mut R2,
    ) -> Result<Self>
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let g_msg = full_rank_matrix(n, msg_len, msg_rng, |m| m.rank() == n.min(msg_len))?;
        let g = if rand_len == 0 {
            g_msg
        } else {
            let full = n.min(msg_len + rand_len);
            let mut joined = None;
            full_rank_matrix(n, rand_len, rand_rng, |r| {
                if r.rank() != n.min(rand_len) {
                    return false;
                }
                let g = g_msg.hstack(r).expect("equal row counts");
                let ok = g.rank() == full;
                if ok {
                    joined = Some(g);
                }
                ok
            })?;
            joined.expect("accepted draw")
        };
        Self::new(g, msg_len, rand_len)
    }

    pub fn generator(&self) -> &BitMatrix {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.g.rows()
    }

    pub fn msg_len(&self) -> usize {
        self.msg_len
    }

    pub fn rand_len(&self) -> usize {
        self.rand_len
    }

    /// The randomness columns `G_r`.
    pub fn randomness_part(&self) -> BitMatrix {
        self.g.column_range(self.msg_len, self.g.cols())
    }

    /// The code keeping only the first `rand_len` randomness columns.
    pub fn with_rand_len(&self, rand_len: usize) -> Result<Self> {
        if rand_len > self.rand_len {
            return Err(Error::OutOfRange {
                name: "rand_len",
                value: rand_len as f64,
                lo: 0.0,
                hi: self.rand_len as f64,
            });
        }
        Self::new(
            self.g.column_range(0, self.msg_len + rand_len),
            self.msg_len,
            rand_len,
        )
    }

    fn codeword(&self, msg: &BitVector, r: &BitVector) -> Result<BitVector> {
        self.g.mul_vec(&msg.concat(r))
    }
}

pub fn wiretap_encode<R: Rng + ?Sized>(
    code: &WiretapBinningCode,
    msg: &BitVector,
    rng: &mut R,
) -> Result<BitVector> {
    if msg.len() != code.msg_len {
        return Err(Error::DimensionMismatch {
            op: "wiretap encoding",
            expected: code.msg_len,
            found: msg.len(),
        });
    }
    let r = BitVector::random(code.rand_len, rng);
    code.codeword(msg, &r)
}

/// ML codeword over BSC(`p`) among all `2^{msg_len + rand_len}`
/// codewords; returns its message part.
pub fn wiretap_decode(
    code: &WiretapBinningCode,
    y: &BitVector,
    p: f64,
    budget: &Budget,
) -> Result<BitVector> {
    let coeffs = ml_bsc_decode(&code.g, y, p, budget)?;
    Ok(coeffs.slice(0, code.msg_len))
}

/// `I(Msg; Z^n)` for a uniform message sent over BSC(`q`).
pub fn wiretap_exact_leakage(code: &WiretapBinningCode, q: f64, budget: &Budget) -> Result<f64> {
    let cols = code.msg_len + code.rand_len;
    budget.check_terms("wiretap leakage", cols + code.n())?;
    let noise = noise_pmf(q, code.n(), budget.max_terms)?;
    let weight = 0.5f64.powi(cols as i32);
    let entries = (0..1u64 << cols).map(|c| {
        let word = code
            .g
            .mul_vec(&BitVector::from_index(c, cols))
            .expect("conformable")
            .to_index();
        ((c >> code.rand_len) as usize, word, weight)
    });
    let table = table_through_noise(1 << code.msg_len, &noise, entries)?;
    mutual_information(&table)
}

/// Strict alternation of two equal-length inputs over the two-terminal
/// channel. Returns the full interleaved `(y, z)`.
pub fn timeshare_transmit<R1, R2>(
    x1: &BitVector,
    x2: &BitVector,
    params: &MawcParams,
    rng_y: &mut R1,
    rng_z: &mut R2,
) -> Result<(BitVector, BitVector)>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    if params.num_transmitters != 2 {
        return Err(Error::Precondition(format!(
            "time-sharing needs 2 transmitters, got {}",
            params.num_transmitters
        )));
    }
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            op: "time-sharing",
            expected: x1.len(),
            found: x2.len(),
        });
    }
    let len = x1.len();
    let mut a = BitVector::zeros(2 * len);
    let mut b = BitVector::zeros(2 * len);
    for i in 0..len {
        a.set(2 * i, x1.get(i));
        b.set(2 * i + 1, x2.get(i));
    }
    transmit(&[a, b], params, rng_y, rng_z)
}

/// Splits an interleaved output into the two slots.
pub fn deinterleave(v: &BitVector) -> (BitVector, BitVector) {
    let half = v.len() / 2;
    let mut first = BitVector::zeros(half);
    let mut second = BitVector::zeros(half);
    for i in 0..half {
        first.set(i, v.get(2 * i));
        second.set(i, v.get(2 * i + 1));
    }
    (first, second)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub theta: f64,
    pub channel: MawcParams,
    pub k: usize,
    /// Compressed length `ℓ'`.
    pub km_len: usize,
    /// Local randomness bits per slot; 0 disables the binning layer.
    pub rand_len: usize,
    /// Channel uses per terminal; the block has `2 slot_len` uses.
    pub slot_len: usize,
    pub num_codes: usize,
    pub trials_per_code: usize,
    /// Compute exact leakage for every code.
    pub leakage: bool,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            channel: MawcParams {
                num_transmitters: 2,
                p: 0.0,
                q: 0.0,
            },
            k: 2,
            km_len: 2,
            rand_len: 0,
            slot_len: 2,
            num_codes: 4,
            trials_per_code: 100,
            leakage: true,
        }
    }
}

/// One random instance of the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationCode {
    pub km: KmCode,
    pub wiretap: WiretapBinningCode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationLeakage {
    /// `I(S_m^k; Z^n)` averaged over codes.
    pub per_source_bits: Vec<f64>,
    pub total_bits: f64,
    /// Total leakage of every code.
    pub per_code_total_bits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub n: usize,
    /// `k / n` function values per channel use.
    pub achieved_rate: f64,
    pub error: ErrorEstimate,
    pub leakage: Option<SeparationLeakage>,
    /// Best separation rate without secrecy.
    pub separation_rate: Rate,
    /// Best separation rate with secrecy; `None` when the eavesdropper
    /// channel is not a degraded version of the legitimate one.
    pub separation_secrecy_rate: Option<Rate>,
}

impl SeparationConfig {
    pub fn validate(&self, budget: &Budget) -> Result<()> {
        self.channel.validate()?;
        Error::check_prob("theta", self.theta, 0.0, 1.0)?;
        if self.channel.num_transmitters != 2 {
            return Err(Error::Precondition(format!(
                "separation pipeline needs M = 2, got {}",
                self.channel.num_transmitters
            )));
        }
        if self.k == 0 || self.km_len == 0 || self.slot_len == 0 {
            return Err(Error::Precondition(
                "k, km_len and slot_len must be at least 1".into(),
            ));
        }
        budget.check_decoder("wiretap decoding", self.km_len + self.rand_len)?;
        budget.check_decoder("Körner-Marton decoding", self.k)?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        2 * self.slot_len
    }
}

/// The code used for `code_index` under `master_seed`.
pub fn separation_code_for_index(
    config: &SeparationConfig,
    master_seed: u64,
    code_index: u64,
) -> Result<SeparationCode> {
    let km = KmCode::random(
        config.k,
        config.km_len,
        &mut rng::stream(master_seed, &[tag::KM, code_index]),
    )?;
    let wiretap = WiretapBinningCode::random(
        config.slot_len,
        config.km_len,
        config.rand_len,
        &mut rng::stream(master_seed, &[tag::WIRETAP, code_index, 0]),
        &mut rng::stream(master_seed, &[tag::WIRETAP, code_index, 1]),
    )?;
    Ok(SeparationCode { km, wiretap })
}

/// One end-to-end trial; returns whether `Û^k ≠ U^k`.
pub fn separation_trial(
    config: &SeparationConfig,
    code: &SeparationCode,
    joint: &JointPmf,
    master_seed: u64,
    code_index: u64,
    trial_index: u64,
    budget: &Budget,
) -> Result<bool> {
    let path = |sub: u64, extra: u64| [tag::TRIAL, code_index, trial_index, sub, extra];
    let block = sample_block(
        joint,
        config.k,
        &mut rng::stream(master_seed, &path(tag::SOURCE, 0)),
    )?;
    let s = block.sequences();
    let mut x = Vec::with_capacity(2);
    for (m, sm) in s.iter().enumerate() {
        let msg = km_compress(&code.km, sm)?;
        let mut r = rng::stream(master_seed, &path(tag::LOCAL_RANDOMNESS, m as u64));
        x.push(wiretap_encode(&code.wiretap, &msg, &mut r)?);
    }
    let (y, _z) = timeshare_transmit(
        &x[0],
        &x[1],
        &config.channel,
        &mut rng::stream(master_seed, &path(tag::NOISE_Y, 0)),
        &mut rng::stream(master_seed, &path(tag::NOISE_Z, 0)),
    )?;
    let (y1, y2) = deinterleave(&y);
    let p = config.channel.p;
    let w1 = wiretap_decode(&code.wiretap, &y1, p, budget)?;
    let w2 = wiretap_decode(&code.wiretap, &y2, p, budget)?;
    let u_hat = km_decode(&code.km, &w1.xor(&w2)?, config.theta, budget)?;
    Ok(u_hat != block.function_values())
}

/// `P(z | s)` of one slot for every source block `s`, as a row-major
/// `2^k × 2^slot_len` table.
fn slot_channel(code: &SeparationCode, noise: &NoisePmf) -> Result<Vec<f64>> {
    let k = code.km.k();
    let wt = &code.wiretap;
    let cols = 1usize << wt.n();
    let noise_table = noise.table();
    let r_weight = 0.5f64.powi(wt.rand_len as i32);
    let mut table = vec![0.0; (1 << k) * cols];
    for s in 0..1u64 << k {
        let msg = km_compress(&code.km, &BitVector::from_index(s, k))?;
        let row = &mut table[s as usize * cols..(s as usize + 1) * cols];
        for r in 0..1u64 << wt.rand_len {
            let word = wt
                .codeword(&msg, &BitVector::from_index(r, wt.rand_len))?
                .to_index();
            for (z, d) in row.iter_mut().enumerate() {
                *d += r_weight * noise_table[(z as u64 ^ word) as usize];
            }
        }
    }
    Ok(table)
}

/// Exact `I(S_1^k; Z^n)` and `I(S_2^k; Z^n)` for one code, where the
/// eavesdropper sees both slots. The two slots are conditionally
/// independent given the sources, so
/// `P(s_1, z', z'') = P(z'|s_1) Σ_{s_2} P(s_1, s_2) P(z''|s_2)`.
pub fn separation_exact_leakage(
    code: &SeparationCode,
    joint: &JointPmf,
    q: f64,
    budget: &Budget,
) -> Result<[f64; 2]> {
    if joint.num_sources() != 2 {
        return Err(Error::Precondition("separation leakage needs M = 2".into()));
    }
    let k = code.km.k();
    let slot = code.wiretap.n();
    budget.check_terms("separation leakage", k + 2 * slot)?;
    budget.check_terms("separation leakage", 2 * k + slot)?;
    budget.check_terms(
        "separation leakage",
        k + code.wiretap.msg_len + code.wiretap.rand_len + slot,
    )?;
    let noise = noise_pmf(q, slot, budget.max_terms)?;
    let w = slot_channel(code, &noise)?;
    let size = 1usize << k;
    let cols = 1usize << slot;

    // P(s_1, s_2) for blocks of i.i.d. pairs.
    let mut pair = vec![0.0; size * size];
    for (idx, pr) in pair.iter_mut().enumerate() {
        let (s1, s2) = (idx / size, idx % size);
        *pr = (0..k).fold(1.0, |acc, i| {
            let b1 = (s1 >> (k - 1 - i)) & 1;
            let b2 = (s2 >> (k - 1 - i)) & 1;
            acc * joint.prob((b1 << 1) | b2)
        });
    }

    let mut out = [0.0; 2];
    for (m, slot_out) in out.iter_mut().enumerate() {
        // mixed[s_m][z_other] = Σ_{s_other} P(s_m, s_other) P(z_other | s_other)
        let mut mixed = vec![0.0; size * cols];
        for sm in 0..size {
            for so in 0..size {
                let pr = if m == 0 {
                    pair[sm * size + so]
                } else {
                    pair[so * size + sm]
                };
                if pr == 0.0 {
                    continue;
                }
                let dst = &mut mixed[sm * cols..(sm + 1) * cols];
                for (d, wz) in dst.iter_mut().zip(&w[so * cols..(so + 1) * cols]) {
                    *d += pr * wz;
                }
            }
        }
        // The slot order inside Z does not change the information, so the
        // own slot always goes first.
        let mut probs = vec![0.0; size * cols * cols];
        for sm in 0..size {
            for z_own in 0..cols {
                let a = w[sm * cols + z_own];
                let base = (sm * cols + z_own) * cols;
                for z_other in 0..cols {
                    probs[base + z_other] = a * mixed[sm * cols + z_other];
                }
            }
        }
        *slot_out = mutual_information(&JointTable::new(size, cols * cols, probs)?)?;
    }
    Ok(out)
}

/// Runs the whole pipeline over `num_codes` random instances.
pub fn separation_pipeline(
    config: &SeparationConfig,
    master_seed: u64,
    budget: &Budget,
) -> Result<SeparationReport> {
    config.validate(budget)?;
    let joint = doubly_symmetric(config.theta)?;
    let codes: Vec<SeparationCode> = (0..config.num_codes as u64)
        .into_par_iter()
        .map(|c| separation_code_for_index(config, master_seed, c))
        .collect::<Result<_>>()?;

    let trials = config.trials_per_code;
    let failures: Vec<bool> = (0..config.num_codes * trials)
        .into_par_iter()
        .map(|i| {
            let (c, t) = (i / trials, i % trials);
            separation_trial(
                config,
                &codes[c],
                &joint,
                master_seed,
                c as u64,
                t as u64,
                budget,
            )
        })
        .collect::<Result<_>>()?;
    let per_code: Vec<u64> = if trials == 0 {
        vec![0; config.num_codes]
    } else {
        failures
            .chunks(trials)
            .map(|ch| ch.iter().filter(|&&f| f).count() as u64)
            .collect()
    };
    let error = ErrorEstimate::from_counts(&per_code, trials as u64, None);

    let leakage = if config.leakage && !codes.is_empty() {
        let per_code: Vec<[f64; 2]> = codes
            .par_iter()
            .map(|c| separation_exact_leakage(c, &joint, config.channel.q, budget))
            .collect::<Result<_>>()?;
        let count = per_code.len() as f64;
        let per_source_bits: Vec<f64> = (0..2)
            .map(|m| per_code.iter().map(|l| l[m]).sum::<f64>() / count)
            .collect();
        Some(SeparationLeakage {
            total_bits: per_source_bits.iter().sum(),
            per_source_bits,
            per_code_total_bits: per_code.iter().map(|l| l[0] + l[1]).collect(),
        })
    } else {
        None
    };

    let p = config.channel.p.min(0.5);
    let secrecy = if p < 0.5 {
        match separation_secrecy_rate(p, config.channel.q, config.theta) {
            Ok(r) => Some(r),
            Err(Error::Precondition(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(SeparationReport {
        n: config.n(),
        achieved_rate: config.k as f64 / config.n() as f64,
        error,
        leakage,
        separation_rate: separation_computation_rate(p, config.theta)?,
        separation_secrecy_rate: secrecy,
    })
}
