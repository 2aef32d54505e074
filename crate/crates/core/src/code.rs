//! Random linear computation codes for the modulo-2 adder channel.
//!
//! Every terminal sends `x_m = A B s_m`. Since the channel adds its inputs
//! modulo 2, the receiver sees `A B u ⊕ n_Y` with `u = s_1 ⊕ ... ⊕ s_M`, a
//! point-to-point BSC carrying the compressed function sequence `B u`.
//! Decoding runs in two stages: an exhaustive ML channel decoder recovers
//! `w = B u` from `y`, then an exhaustive MAP search over the coset
//! `{u : B u = w}` recovers `u`. [`joint_ml_decode`] searches `u` directly
//! and serves as the reference the two-stage decoder is measured against.
//!
//! All searches break ties towards the lexicographically smallest
//! candidate.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::channel::{transmit, MawcParams};
use crate::error::{Error, Result};
use crate::gf2::{for_each_combination, lex_cmp_words, BitMatrix, BitVector};
use crate::rng::{self, tag};
use crate::source::{binary_entropy, function_pmf, sample_block, JointPmf, SourceBlock};

/// Admissible compressed lengths `ℓ` with `k H(U) < ℓ < n C`, `C = 1 - H(p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateWindow {
    pub k: usize,
    pub n: usize,
    pub h_u: f64,
    pub capacity: f64,
    pub lo: f64,
    pub hi: f64,
    /// Smallest and largest admissible `ℓ`, if any.
    pub ell_range: Option<(usize, usize)>,
}

impl RateWindow {
    pub fn is_empty(&self) -> bool {
        self.ell_range.is_none()
    }

    pub fn contains(&self, ell: usize) -> bool {
        self.ell_range
            .is_some_and(|(lo, hi)| (lo..=hi).contains(&ell))
    }

    /// Middle of the admissible range, rounding down.
    pub fn midpoint(&self) -> Option<usize> {
        self.ell_range.map(|(lo, hi)| (lo + hi) / 2)
    }
}

pub fn rate_window(k: usize, n: usize, h_u: f64, p: f64) -> Result<RateWindow> {
    if k == 0 || n == 0 {
        return Err(Error::Precondition("k and n must be at least 1".into()));
    }
    Error::check_prob("H(U)", h_u, 0.0, 1.0)?;
    Error::check_prob("p", p, 0.0, 0.5)?;
    let capacity = 1.0 - binary_entropy(p)?;
    let lo = k as f64 * h_u;
    let hi = n as f64 * capacity;
    let first = lo.floor() as usize + 1;
    let last = if hi <= 0.0 { 0 } else { hi.ceil() as usize - 1 };
    let ell_range = (first <= last && last >= 1).then_some((first, last));
    Ok(RateWindow {
        k,
        n,
        h_u,
        capacity,
        lo,
        hi,
        ell_range,
    })
}

/// The pair `(A, B)` shared by every terminal, the receiver and the
/// eavesdropper.
#[derive(Clone, Debug, PartialEq)]
pub struct CompCode {
    a: BitMatrix,
    b: BitMatrix,
    ab: BitMatrix,
    a_cols: Vec<BitVector>,
    b_cols: Vec<BitVector>,
    ab_cols: Vec<BitVector>,
}

impl CompCode {
    /// `a` is `n × ℓ`, `b` is `ℓ × k`.
    pub fn from_matrices(a: BitMatrix, b: BitMatrix) -> Result<Self> {
        if a.cols() != b.rows() {
            return Err(Error::DimensionMismatch {
                op: "code construction (A cols vs B rows)",
                expected: a.cols(),
                found: b.rows(),
            });
        }
        if a.rows() == 0 || a.cols() == 0 || b.cols() == 0 {
            return Err(Error::Precondition(
                "code dimensions must be at least 1".into(),
            ));
        }
        let ab = a.mul_mat(&b)?;
        Ok(Self {
            a_cols: a.columns(),
            b_cols: b.columns(),
            ab_cols: ab.columns(),
            a,
            b,
            ab,
        })
    }

    pub fn a(&self) -> &BitMatrix {
        &self.a
    }

    pub fn b(&self) -> &BitMatrix {
        &self.b
    }

    /// The composite `A B` (`n × k`).
    pub fn generator(&self) -> &BitMatrix {
        &self.ab
    }

    pub fn k(&self) -> usize {
        self.b.cols()
    }

    pub fn ell(&self) -> usize {
        self.a.cols()
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn in_window(&self, window: &RateWindow) -> bool {
        window.k == self.k() && window.n == self.n() && window.contains(self.ell())
    }

    /// `x = A B s`.
    pub fn encode(&self, s: &BitVector) -> Result<BitVector> {
        self.ab.mul_vec(s)
    }
}

/// Draws `A` then `B` with i.i.d. uniform entries from `rng`.
pub fn construct<R: Rng + ?Sized>(k: usize, n: usize, ell: usize, rng: &mut R) -> Result<CompCode> {
    if k == 0 || n == 0 || ell == 0 {
        return Err(Error::Precondition(
            "code dimensions must be at least 1".into(),
        ));
    }
    let a = BitMatrix::random(n, ell, rng);
    let b = BitMatrix::random(ell, k, rng);
    CompCode::from_matrices(a, b)
}

/// Transmission without coding: every terminal sends its source block.
pub fn uncoded_transmit(block: &SourceBlock) -> Vec<BitVector> {
    block.sequences().to_vec()
}

fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            expected,
            found,
        })
    }
}

/// `count · log(prob)` with `0 · log 0 = 0`.
fn log_term(count: usize, prob: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * prob.ln()
    }
}

/// Log-likelihood of an i.i.d. Bern(`p_one`) sequence of length `len`,
/// tabulated by weight.
fn bernoulli_log_table(len: usize, p_one: f64) -> Vec<f64> {
    (0..=len)
        .map(|w| log_term(w, p_one) + log_term(len - w, 1.0 - p_one))
        .collect()
}

/// ML decoding of `y` over BSC(`p`) for the linear code spanned by the
/// columns of `generator`; returns the coefficient vector.
pub fn ml_bsc_decode(
    generator: &BitMatrix,
    y: &BitVector,
    p: f64,
    budget: &Budget,
) -> Result<BitVector> {
    ml_bsc_decode_columns(generator.rows(), &generator.columns(), y, p, budget)
}

fn ml_bsc_decode_columns(
    rows: usize,
    columns: &[BitVector],
    y: &BitVector,
    p: f64,
    budget: &Budget,
) -> Result<BitVector> {
    check_len("ML channel decoding", rows, y.len())?;
    Error::check_prob("p", p, 0.0, 1.0)?;
    budget.check_decoder("ML channel decoding", columns.len())?;
    let dim = columns.len();
    if p == 0.5 {
        // Every codeword is equally likely.
        return Ok(BitVector::zeros(dim));
    }
    let maximize = p > 0.5;
    let mut best = (usize::MAX, u64::MAX);
    for_each_combination(rows, columns, |idx, word| {
        let d = crate::gf2::hamming_words(word, y.words());
        let score = if maximize { rows - d } else { d };
        if score < best.0 || (score == best.0 && idx < best.1) {
            best = (score, idx);
        }
    });
    Ok(BitVector::from_index(best.1, dim))
}

/// MAP search over `{u : B u = w}` for i.i.d. Bern(`p_one`) `u`. When `w`
/// is outside the column space of `B`, the nearest reachable `w'`
/// (Hamming distance, then lexicographic) is used instead.
pub fn coset_decode(
    b: &BitMatrix,
    w: &BitVector,
    p_one: f64,
    budget: &Budget,
) -> Result<BitVector> {
    coset_decode_columns(b.rows(), &b.columns(), w, p_one, budget)
}

fn coset_decode_columns(
    rows: usize,
    columns: &[BitVector],
    w: &BitVector,
    p_one: f64,
    budget: &Budget,
) -> Result<BitVector> {
    check_len("coset decoding", rows, w.len())?;
    Error::check_prob("P_U(1)", p_one, 0.0, 1.0)?;
    let k = columns.len();
    budget.check_decoder("coset decoding", k)?;
    let prior = bernoulli_log_table(k, p_one);

    struct Best {
        dist: usize,
        image: Vec<u64>,
        loglik: f64,
        idx: u64,
    }
    let mut best: Option<Best> = None;
    for_each_combination(rows, columns, |idx, image| {
        let dist = crate::gf2::hamming_words(image, w.words());
        let loglik = prior[idx.count_ones() as usize];
        let better = match &best {
            None => true,
            Some(b) => match dist.cmp(&b.dist) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => match lex_cmp_words(image, &b.image) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => loglik > b.loglik || (loglik == b.loglik && idx < b.idx),
                },
            },
        };
        if better {
            best = Some(Best {
                dist,
                image: image.to_vec(),
                loglik,
                idx,
            });
        }
    });
    let idx = best.map_or(0, |b| b.idx);
    Ok(BitVector::from_index(idx, k))
}

/// First stage: `ŵ = argmin_w d(A w, y)`.
pub fn decode_inner(code: &CompCode, y: &BitVector, p: f64, budget: &Budget) -> Result<BitVector> {
    ml_bsc_decode_columns(code.n(), &code.a_cols, y, p, budget)
}

/// Second stage: most likely `u` with `B u = w`.
pub fn decode_outer(
    code: &CompCode,
    w: &BitVector,
    p_u_one: f64,
    budget: &Budget,
) -> Result<BitVector> {
    coset_decode_columns(code.ell(), &code.b_cols, w, p_u_one, budget)
}

/// Two-stage decoder: [`decode_outer`] after [`decode_inner`].
pub fn decode(
    code: &CompCode,
    y: &BitVector,
    p: f64,
    p_u_one: f64,
    budget: &Budget,
) -> Result<BitVector> {
    let w = decode_inner(code, y, p, budget)?;
    decode_outer(code, &w, p_u_one, budget)
}

/// Relative tolerance under which two log-posteriors count as tied.
pub const TIE_TOL: f64 = 1e-10;

fn tied(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Joint MAP decoding of `u` from `y` through `A B` and BSC(`p`).
pub fn joint_ml_decode(
    code: &CompCode,
    y: &BitVector,
    p: f64,
    p_u_one: f64,
    budget: &Budget,
) -> Result<BitVector> {
    let n = code.n();
    let k = code.k();
    check_len("joint ML decoding", n, y.len())?;
    Error::check_prob("p", p, 0.0, 1.0)?;
    Error::check_prob("P_U(1)", p_u_one, 0.0, 1.0)?;
    budget.check_decoder("joint ML decoding", k)?;
    let prior = bernoulli_log_table(k, p_u_one);
    let channel = bernoulli_log_table(n, p);
    let mut best = (f64::NEG_INFINITY, u64::MAX);
    for_each_combination(n, &code.ab_cols, |idx, word| {
        let d = crate::gf2::hamming_words(word, y.words());
        let score = prior[idx.count_ones() as usize] + channel[d];
        let better = if best.1 == u64::MAX {
            true
        } else if tied(score, best.0) {
            idx < best.1
        } else {
            score > best.0
        };
        if better {
            best = (score, idx);
        }
    });
    Ok(BitVector::from_index(best.1, k))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    TwoStage,
    JointMl,
    Uncoded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub joint: JointPmf,
    pub channel: MawcParams,
    pub k: usize,
    pub n: usize,
    /// Compressed length; ignored for [`DecoderKind::Uncoded`].
    pub ell: usize,
    pub decoder: DecoderKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub half_width: f64,
    pub errors: u64,
    pub trials: u64,
    pub per_code: Vec<f64>,
    /// Whether `ℓ` satisfies `k H(U) < ℓ < n C`; `None` for uncoded runs.
    pub in_window: Option<bool>,
}

impl ErrorEstimate {
    /// Pooled block-error rate with a 95% normal-approximation interval.
    pub fn from_counts(
        per_code_errors: &[u64],
        trials_per_code: u64,
        in_window: Option<bool>,
    ) -> Self {
        let errors: u64 = per_code_errors.iter().sum();
        let trials = trials_per_code * per_code_errors.len() as u64;
        let mean = if trials == 0 {
            0.0
        } else {
            errors as f64 / trials as f64
        };
        let half_width = if trials == 0 {
            0.0
        } else {
            1.96 * (mean * (1.0 - mean) / trials as f64).sqrt()
        };
        Self {
            mean,
            ci_low: (mean - half_width).max(0.0),
            ci_high: (mean + half_width).min(1.0),
            half_width,
            errors,
            trials,
            per_code: per_code_errors
                .iter()
                .map(|&e| e as f64 / trials_per_code.max(1) as f64)
                .collect(),
            in_window,
        }
    }
}

/// The code used for `code_index` under `master_seed`.
pub fn code_for_index(
    config: &SimulationConfig,
    master_seed: u64,
    code_index: u64,
) -> Result<CompCode> {
    let mut r = rng::stream(master_seed, &[tag::CODE, code_index]);
    construct(config.k, config.n, config.ell, &mut r)
}

/// Runs one trial: sample the sources, encode at every terminal, send over
/// the channel and decode. Returns the source block, the channel outputs
/// and the estimate `Û^k`.
pub fn run_trial(
    config: &SimulationConfig,
    code: Option<&CompCode>,
    master_seed: u64,
    code_index: u64,
    trial_index: u64,
    budget: &Budget,
) -> Result<(SourceBlock, BitVector, BitVector)> {
    let path = |sub| [tag::TRIAL, code_index, trial_index, sub];
    let block = sample_block(
        &config.joint,
        config.k,
        &mut rng::stream(master_seed, &path(tag::SOURCE)),
    )?;
    let inputs = match code {
        Some(c) => block
            .sequences()
            .iter()
            .map(|s| c.encode(s))
            .collect::<Result<Vec<_>>>()?,
        None => uncoded_transmit(&block),
    };
    let (y, _z) = transmit(
        &inputs,
        &config.channel,
        &mut rng::stream(master_seed, &path(tag::NOISE_Y)),
        &mut rng::stream(master_seed, &path(tag::NOISE_Z)),
    )?;
    let p_u_one = function_pmf(&config.joint)[1];
    let p = config.channel.p;
    let estimate = match (config.decoder, code) {
        (DecoderKind::TwoStage, Some(c)) => decode(c, &y, p, p_u_one, budget)?,
        (DecoderKind::JointMl, Some(c)) => joint_ml_decode(c, &y, p, p_u_one, budget)?,
        (DecoderKind::Uncoded, None) => y.clone(),
        _ => {
            return Err(Error::Precondition(
                "decoder kind does not match the presence of a code".into(),
            ))
        }
    };
    Ok((block, y, estimate))
}

fn validate_simulation(config: &SimulationConfig, budget: &Budget) -> Result<()> {
    config.channel.validate()?;
    if config.channel.num_transmitters != config.joint.num_sources() {
        return Err(Error::DimensionMismatch {
            op: "simulation (transmitters vs sources)",
            expected: config.joint.num_sources(),
            found: config.channel.num_transmitters,
        });
    }
    if config.k == 0 || config.n == 0 {
        return Err(Error::Precondition("k and n must be at least 1".into()));
    }
    match config.decoder {
        DecoderKind::Uncoded => {
            if config.n != config.k {
                return Err(Error::Precondition(format!(
                    "uncoded transmission needs n = k, got k={} n={}",
                    config.k, config.n
                )));
            }
        }
        DecoderKind::TwoStage => {
            budget.check_decoder("ML channel decoding", config.ell)?;
            budget.check_decoder("coset decoding", config.k)?;
        }
        DecoderKind::JointMl => budget.check_decoder("joint ML decoding", config.k)?,
    }
    Ok(())
}

/// Monte Carlo estimate of `P[Û^k ≠ U^k]` averaged over `num_codes` random
/// codes with `trials_per_code` trials each. Every `(code, trial)` pair
/// draws from its own stream, so the result is independent of scheduling.
pub fn simulate_error_prob(
    config: &SimulationConfig,
    num_codes: usize,
    trials_per_code: usize,
    master_seed: u64,
    budget: &Budget,
) -> Result<ErrorEstimate> {
    validate_simulation(config, budget)?;
    let coded = config.decoder != DecoderKind::Uncoded;
    let in_window = if coded {
        let h_u = binary_entropy(function_pmf(&config.joint)[1])?;
        let p = config.channel.p.min(0.5);
        let window = rate_window(config.k, config.n, h_u, p)?;
        Some(window.contains(config.ell))
    } else {
        None
    };
    let codes: Vec<Option<CompCode>> = (0..num_codes as u64)
        .into_par_iter()
        .map(|c| {
            coded
                .then(|| code_for_index(config, master_seed, c))
                .transpose()
        })
        .collect::<Result<_>>()?;

    let failures: Vec<bool> = (0..num_codes * trials_per_code)
        .into_par_iter()
        .map(|i| {
            let c = i / trials_per_code;
            let t = i % trials_per_code;
            let (block, _y, estimate) = run_trial(
                config,
                codes[c].as_ref(),
                master_seed,
                c as u64,
                t as u64,
                budget,
            )?;
            Ok(estimate != block.function_values())
        })
        .collect::<Result<_>>()?;

    let per_code: Vec<u64> = if trials_per_code == 0 {
        vec![0; num_codes]
    } else {
        failures
            .chunks(trials_per_code)
            .map(|chunk| chunk.iter().filter(|&&f| f).count() as u64)
            .collect()
    };
    Ok(ErrorEstimate::from_counts(
        &per_code,
        trials_per_code as u64,
        in_window,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::source::doubly_symmetric;

    fn budget() -> Budget {
        Budget::default()
    }

    fn full_rank_code(k: usize, n: usize, ell: usize, seed: u64) -> CompCode {
        (0..)
            .map(|i| construct(k, n, ell, &mut stream(seed, &[i])).unwrap())
            .find(|c| c.a().rank() == ell && c.b().rank() == k)
            .unwrap()
    }

    #[test]
    fn rate_window_examples() {
        let w = rate_window(12, 24, 1.0, 0.05).unwrap();
        assert_eq!(w.lo, 12.0);
        // 24 (1 - H(0.05)) to 20 digits: 17.126473029217052910
        assert!((w.hi - 17.126_473_029_217_053).abs() < 1e-12);
        assert_eq!(w.ell_range, Some((13, 17)));
        assert_eq!(w.midpoint(), Some(15));

        assert!(rate_window(4, 8, 1.0, 0.5).unwrap().is_empty());
        assert_eq!(rate_window(4, 8, 1.0, 0.5).unwrap().hi, 0.0);
        assert!(rate_window(10, 10, 1.0, 0.01).unwrap().is_empty());
        assert_eq!(rate_window(4, 8, 1.0, 0.0).unwrap().ell_range, Some((5, 7)));
        assert!(rate_window(0, 8, 1.0, 0.0).is_err());
    }

    #[test]
    fn construct_shapes_and_determinism() {
        let c = construct(4, 8, 5, &mut stream(1, &[0])).unwrap();
        assert_eq!((c.a().rows(), c.a().cols()), (8, 5));
        assert_eq!((c.b().rows(), c.b().cols()), (5, 4));
        assert_eq!(c, construct(4, 8, 5, &mut stream(1, &[0])).unwrap());
        assert_ne!(c, construct(4, 8, 5, &mut stream(1, &[1])).unwrap());
    }

    #[test]
    fn encode_examples() {
        let c = construct(5, 9, 6, &mut stream(2, &[0])).unwrap();
        assert!(c.encode(&BitVector::zeros(5)).unwrap().is_zero());
        for i in 0..20 {
            let s = BitVector::random(5, &mut stream(3, &[i]));
            let t = BitVector::random(5, &mut stream(4, &[i]));
            let lhs = c.encode(&s.xor(&t).unwrap()).unwrap();
            let rhs = c.encode(&s).unwrap().xor(&c.encode(&t).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
        let tiny = CompCode::from_matrices(
            BitMatrix::from_rows(&[&[1], &[1]]).unwrap(),
            BitMatrix::identity(1),
        )
        .unwrap();
        assert_eq!(
            tiny.encode(&BitVector::from_bits(&[1])).unwrap().to_bits(),
            vec![1, 1]
        );
        assert!(tiny.encode(&BitVector::zeros(2)).is_err());
    }

    /// [7,4] Hamming code generator (columns are the basis codewords).
    fn hamming_generator() -> BitMatrix {
        BitMatrix::from_rows(&[
            &[1, 0, 0, 0],
            &[0, 1, 0, 0],
            &[0, 0, 1, 0],
            &[0, 0, 0, 1],
            &[0, 1, 1, 1],
            &[1, 0, 1, 1],
            &[1, 1, 0, 1],
        ])
        .unwrap()
    }

    #[test]
    fn inner_decoder_examples() {
        let g = hamming_generator();
        // Minimum distance 3, checked exhaustively.
        let min_weight = (1..16u64)
            .map(|i| g.mul_vec(&BitVector::from_index(i, 4)).unwrap().weight())
            .min()
            .unwrap();
        assert_eq!(min_weight, 3);
        let code = CompCode::from_matrices(g.clone(), BitMatrix::identity(4)).unwrap();
        for i in 0..16 {
            let w = BitVector::from_index(i, 4);
            let cw = g.mul_vec(&w).unwrap();
            assert_eq!(decode_inner(&code, &cw, 0.0, &budget()).unwrap(), w);
            for flip in 0..7 {
                let mut y = cw.clone();
                y.flip(flip);
                assert_eq!(decode_inner(&code, &y, 0.1, &budget()).unwrap(), w);
            }
        }
    }

    #[test]
    fn inner_decoder_ties_are_lexicographic() {
        let a = BitMatrix::from_rows(&[&[1, 0], &[1, 0], &[0, 1], &[0, 1]]).unwrap();
        let code = CompCode::from_matrices(a, BitMatrix::identity(2)).unwrap();
        let y4 = BitVector::from_bits(&[1, 0, 1, 0]);
        // Candidates 00,01,10,11 have distances 2,2,2,2: smallest wins.
        assert_eq!(
            decode_inner(&code, &y4, 0.1, &budget()).unwrap().to_bits(),
            vec![0, 0]
        );
        let y4 = BitVector::from_bits(&[1, 1, 1, 0]);
        // 10 -> d=1, 11 -> d=1, 01 -> d=3, 00 -> d=3.
        assert_eq!(
            decode_inner(&code, &y4, 0.1, &budget()).unwrap().to_bits(),
            vec![1, 0]
        );
        // A useless channel makes every candidate equally likely.
        assert!(decode_inner(&code, &y4, 0.5, &budget()).unwrap().is_zero());
    }

    #[test]
    fn outer_decoder_examples() {
        let code = full_rank_code(4, 10, 6, 5);
        for i in 0..16 {
            let u = BitVector::from_index(i, 4);
            let w = code.b().mul_vec(&u).unwrap();
            assert_eq!(decode_outer(&code, &w, 0.3, &budget()).unwrap(), u);
        }
        // B = [1 1 0]: coset of w = 0 within {u : u1 = u2} that has u3 = 1
        // is {001, 111}; with B = [[1,1,0],[0,0,1]] and w = (0,1).
        let b = BitMatrix::from_rows(&[&[1, 1, 0], &[0, 0, 1]]).unwrap();
        let w = BitVector::from_bits(&[0, 1]);
        assert_eq!(
            coset_decode(&b, &w, 0.3, &budget()).unwrap().to_bits(),
            vec![0, 0, 1]
        );
        // Above one half the heavier element wins.
        assert_eq!(
            coset_decode(&b, &w, 0.7, &budget()).unwrap().to_bits(),
            vec![1, 1, 1]
        );
        // Uniform prior: lexicographically smallest coset member.
        assert_eq!(
            coset_decode(&b, &w, 0.5, &budget()).unwrap().to_bits(),
            vec![0, 0, 1]
        );
    }

    #[test]
    fn outer_decoder_falls_back_to_nearest_syndrome() {
        // Column space of B is {000, 110}; w = 111 is closest to 110.
        let b = BitMatrix::from_rows(&[&[1], &[1], &[0]]).unwrap();
        let w = BitVector::from_bits(&[1, 1, 1]);
        assert_eq!(
            coset_decode(&b, &w, 0.1, &budget()).unwrap().to_bits(),
            vec![1]
        );
        // w = 100 is at distance 1 from both 000 and 110; 000 is smaller.
        let w = BitVector::from_bits(&[1, 0, 0]);
        assert_eq!(
            coset_decode(&b, &w, 0.9, &budget()).unwrap().to_bits(),
            vec![0]
        );
    }

    #[test]
    fn noiseless_two_stage_is_identity() {
        for (k, ell, n) in [(4, 5, 7), (6, 7, 9), (8, 9, 12)] {
            let code = full_rank_code(k, n, ell, 40 + k as u64);
            for i in 0..1u64 << k {
                let u = BitVector::from_index(i, k);
                let s1 = BitVector::random(k, &mut stream(6, &[i]));
                let s2 = s1.xor(&u).unwrap();
                let x = [code.encode(&s1).unwrap(), code.encode(&s2).unwrap()];
                let params = MawcParams::new(2, 0.0, 0.0).unwrap();
                let (y, _) =
                    transmit(&x, &params, &mut stream(0, &[0]), &mut stream(0, &[1])).unwrap();
                assert_eq!(decode(&code, &y, 0.0, 0.5, &budget()).unwrap(), u);
            }
        }
    }

    #[test]
    fn zero_word_decodes_to_zero() {
        let code = construct(5, 10, 7, &mut stream(8, &[0])).unwrap();
        let u = decode(&code, &BitVector::zeros(10), 0.1, 0.3, &budget()).unwrap();
        assert!(u.is_zero());
    }

    #[test]
    fn joint_ml_examples() {
        let code = full_rank_code(4, 8, 6, 9);
        for i in 0..16 {
            let u = BitVector::from_index(i, 4);
            let y = code.encode(&u).unwrap();
            assert_eq!(joint_ml_decode(&code, &y, 0.0, 0.5, &budget()).unwrap(), u);
            let noisy = BitVector::random(8, &mut stream(10, &[i]));
            assert!(joint_ml_decode(&code, &noisy, 0.2, 0.0, &budget())
                .unwrap()
                .is_zero());
        }
    }

    #[test]
    fn budget_is_enforced() {
        let tight = Budget {
            max_terms: 1 << 10,
            max_decoder_bits: 4,
        };
        let code = construct(3, 8, 6, &mut stream(1, &[1])).unwrap();
        assert!(matches!(
            decode_inner(&code, &BitVector::zeros(8), 0.1, &tight),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(decode_outer(&code, &BitVector::zeros(6), 0.1, &tight).is_ok());
    }

    fn sim(decoder: DecoderKind, p: f64, k: usize, n: usize, ell: usize) -> SimulationConfig {
        SimulationConfig {
            joint: doubly_symmetric(0.5).unwrap(),
            channel: MawcParams::new(2, p, 0.1).unwrap(),
            k,
            n,
            ell,
            decoder,
        }
    }

    #[test]
    fn uncoded_noiseless_simulation_is_error_free() {
        let est = simulate_error_prob(
            &sim(DecoderKind::Uncoded, 0.0, 4, 4, 0),
            3,
            100,
            1,
            &budget(),
        )
        .unwrap();
        assert_eq!(est.errors, 0);
        assert_eq!(est.trials, 300);
        assert_eq!(est.in_window, None);
        assert!(
            simulate_error_prob(&sim(DecoderKind::Uncoded, 0.0, 4, 5, 0), 1, 1, 1, &budget())
                .is_err()
        );
    }

    #[test]
    fn useless_channel_error_rate() {
        // Output independent of input: the decoder answers 0^k, wrong with
        // probability 1 - 2^-k for uniform U.
        let k = 2;
        let est = simulate_error_prob(
            &sim(DecoderKind::TwoStage, 0.5, k, 6, 3),
            10,
            400,
            3,
            &budget(),
        )
        .unwrap();
        let expect = 1.0 - 0.5f64.powi(k as i32);
        assert!(
            (est.mean - expect).abs() <= 2.0 * est.half_width + 1e-9,
            "{est:?}"
        );
        assert_eq!(est.in_window, Some(false));
    }

    #[test]
    fn simulation_is_reproducible() {
        let cfg = sim(DecoderKind::TwoStage, 0.05, 4, 8, 5);
        let a = simulate_error_prob(&cfg, 4, 50, 77, &budget()).unwrap();
        let b = simulate_error_prob(&cfg, 4, 50, 77, &budget()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.in_window, Some(true));
    }

    #[test]
    fn noiseless_full_rank_simulation_is_error_free() {
        // With p = 0 every code whose A and B are injective decodes exactly;
        // the per-code rate can only be nonzero for rank-deficient draws.
        let cfg = sim(DecoderKind::TwoStage, 0.0, 4, 8, 6);
        let est = simulate_error_prob(&cfg, 10, 50, 5, &budget()).unwrap();
        for (c, rate) in est.per_code.iter().enumerate() {
            let code = code_for_index(&cfg, 5, c as u64).unwrap();
            if code.a().rank() == 6 && code.b().rank() == 4 {
                assert_eq!(*rate, 0.0);
            }
        }
    }

    #[test]
    fn two_stage_matches_joint_ml_mostly() {
        let code = full_rank_code(4, 12, 5, 12);
        let params = MawcParams::new(2, 0.05, 0.0).unwrap();
        let joint = doubly_symmetric(0.5).unwrap();
        let trials = 2000;
        let agree = (0..trials)
            .filter(|&t| {
                let block = sample_block(&joint, 4, &mut stream(13, &[t, 0])).unwrap();
                let x: Vec<_> = block
                    .sequences()
                    .iter()
                    .map(|s| code.encode(s).unwrap())
                    .collect();
                let (y, _) = transmit(
                    &x,
                    &params,
                    &mut stream(13, &[t, 1]),
                    &mut stream(13, &[t, 2]),
                )
                .unwrap();
                decode(&code, &y, 0.05, 0.5, &budget()).unwrap()
                    == joint_ml_decode(&code, &y, 0.05, 0.5, &budget()).unwrap()
            })
            .count();
        assert!(agree as f64 >= 0.95 * trials as f64, "{agree}/{trials}");
    }

    #[test]
    fn decoding_ignores_terminal_labels() {
        let code = construct(5, 10, 7, &mut stream(14, &[0])).unwrap();
        let params = MawcParams::new(3, 0.1, 0.2).unwrap();
        let s: Vec<BitVector> = (0..3)
            .map(|i| BitVector::random(5, &mut stream(15, &[i])))
            .collect();
        let x: Vec<_> = s.iter().map(|v| code.encode(v).unwrap()).collect();
        let xp = vec![x[1].clone(), x[2].clone(), x[0].clone()];
        let (y1, _) = transmit(&x, &params, &mut stream(16, &[0]), &mut stream(16, &[1])).unwrap();
        let (y2, _) = transmit(&xp, &params, &mut stream(16, &[0]), &mut stream(16, &[1])).unwrap();
        assert_eq!(
            decode(&code, &y1, 0.1, 0.5, &budget()).unwrap(),
            decode(&code, &y2, 0.1, 0.5, &budget()).unwrap()
        );
    }
}
