//! Experiment configuration, execution and artifact emission.
//!
//! A run is fully determined by its JSON configuration and master seed.
//! Every run returns an [`Outcome`]: a JSON result document (config echo,
//! records, timing) and a CSV summary whose rows carry the seed and a
//! SHA-256 hash of the canonical configuration. Floats are written with
//! 17 significant digits everywhere.

use std::io;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::budget::{Budget, ENUM_CAP_ENV};
use crate::channel::MawcParams;
use crate::code::{
    code_for_index, rate_window, simulate_error_prob, DecoderKind, ErrorEstimate, RateWindow,
    SimulationConfig,
};
use crate::error::{Error, Result};
use crate::leakage::{exact_total_leakage, LeakageReport, Scheme};
use crate::rates::{
    bsc_wiretap_secrecy_capacity, computation_capacity, degradation_error,
    secrecy_computation_capacity, separation_computation_rate, separation_secrecy_rate, Rate,
};
use crate::separation::{separation_pipeline, SeparationConfig, SeparationReport};
use crate::source::{
    binary_entropy, condition_check, condition_scan, doubly_symmetric, function_pmf,
    theorem2_scan_with, ConditionScanReport, JointPmf, Theorem2Report,
};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the CSV column layouts, written in every header comment.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Writes every `f64` as `{:.16e}`, i.e. 17 significant digits.
struct SigDigitsFormatter;

impl serde_json::ser::Formatter for SigDigitsFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitsFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

fn fmt_rate(rate: Rate) -> String {
    match rate {
        Rate::Finite(v) => fmt_f64(v),
        Rate::ConstantFunction => "degenerate".into(),
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "NA".into(), fmt_f64)
}

/// Seed and budget caps shared by every configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommonConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    DoublySymmetric { theta: f64 },
    Pmf(JointPmf),
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::DoublySymmetric { theta: 0.5 }
    }
}

impl SourceSpec {
    pub fn joint(&self) -> Result<JointPmf> {
        match self {
            SourceSpec::DoublySymmetric { theta } => doubly_symmetric(*theta),
            SourceSpec::Pmf(pmf) => Ok(pmf.clone()),
        }
    }
}

/// When to compute exact leakage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageMode {
    Off,
    /// Fail when the enumeration exceeds the budget.
    On,
    /// Skip (and say so) when the enumeration exceeds the budget.
    #[default]
    WithinBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatesConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    /// Grid axes; the grid is their Cartesian product.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            common: CommonConfig::default(),
            p: (0..=10).map(|i| i as f64 * 0.05).collect(),
            q: vec![0.5],
            theta: vec![0.5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodePoint {
    pub k: usize,
    pub n: usize,
    /// Compressed length; the midpoint of the admissible window when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompcodeConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub source: SourceSpec,
    pub channel: MawcParams,
    pub decoder: DecoderKind,
    pub points: Vec<CodePoint>,
    pub num_codes: usize,
    pub trials_per_code: usize,
    pub leakage: LeakageMode,
    /// Codes (from index 0) whose leakage is computed.
    pub leakage_codes: usize,
}

impl Default for CompcodeConfig {
    fn default() -> Self {
        Self {
            common: CommonConfig::default(),
            source: SourceSpec::default(),
            channel: MawcParams {
                num_transmitters: 2,
                p: 0.05,
                q: 0.1,
            },
            decoder: DecoderKind::TwoStage,
            points: vec![
                CodePoint {
                    k: 4,
                    n: 8,
                    ell: None,
                },
                CodePoint {
                    k: 8,
                    n: 16,
                    ell: None,
                },
                CodePoint {
                    k: 12,
                    n: 24,
                    ell: None,
                },
            ],
            num_codes: 50,
            trials_per_code: 200,
            leakage: LeakageMode::WithinBudget,
            leakage_codes: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageScheme {
    Uncoded,
    #[default]
    Coded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakageConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub source: SourceSpec,
    pub scheme: LeakageScheme,
    pub k: usize,
    /// Ignored for uncoded transmission, where `n = k`.
    pub n: usize,
    pub ell: usize,
    pub num_codes: usize,
    pub q: Vec<f64>,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            common: CommonConfig::default(),
            source: SourceSpec::default(),
            scheme: LeakageScheme::Coded,
            k: 2,
            n: 4,
            ell: 3,
            num_codes: 20,
            q: vec![0.0, 0.1, 0.3, 0.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Theorem2Config {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub num_sources: usize,
    pub trials: usize,
    pub tol: f64,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Self {
            common: CommonConfig::default(),
            num_sources: 2,
            trials: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationCompareConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub theta: f64,
    pub channel: MawcParams,
    pub k: usize,
    /// Joint computation code.
    pub joint_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_ell: Option<usize>,
    pub joint_decoder: DecoderKind,
    /// Separation pipeline.
    pub km_len: usize,
    pub rand_len: usize,
    pub slot_len: usize,
    pub num_codes: usize,
    pub trials_per_code: usize,
    pub leakage: LeakageMode,
}

impl Default for SeparationCompareConfig {
    fn default() -> Self {
        Self {
            common: CommonConfig::default(),
            theta: 0.5,
            channel: MawcParams {
                num_transmitters: 2,
                p: 0.0,
                q: 0.0,
            },
            k: 2,
            joint_n: 2,
            joint_ell: None,
            joint_decoder: DecoderKind::Uncoded,
            km_len: 2,
            rand_len: 0,
            slot_len: 2,
            num_codes: 4,
            trials_per_code: 200,
            leakage: LeakageMode::WithinBudget,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_secs: f64,
    /// Unix time in seconds.
    pub finished_at: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_hash: String,
    /// The configuration document exactly as given.
    pub config: Box<RawValue>,
    pub budget: Budget,
    pub records: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// The document without timing; identical across reruns.
    pub fn payload_json(&self) -> Result<String> {
        let mut payload = self.clone();
        payload.timing = None;
        to_json(&payload)
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub result: ExperimentResult,
    pub csv: String,
    /// Set when a checked property failed; the run itself completed.
    pub violation: Option<String>,
}

/// Effective settings of one run.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub seed: u64,
    pub budget: Budget,
    pub force: bool,
    pub config_hash: String,
    pub config_echo: Box<RawValue>,
}

impl RunContext {
    /// Seed from `seed_override`, else the config, else 0. Budget from the
    /// config, else the default, with `max_terms` overridable from the
    /// environment.
    pub fn new<T: Serialize>(
        config: &T,
        common: &CommonConfig,
        raw: Option<&str>,
        seed_override: Option<u64>,
        force: bool,
    ) -> Result<Self> {
        let canonical = to_json(config)?;
        let config_hash = Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let config_echo = RawValue::from_string(raw.map_or(canonical, |r| r.trim().to_owned()))?;
        let mut budget = common.budget.unwrap_or_default();
        if std::env::var_os(ENUM_CAP_ENV).is_some() {
            budget.max_terms = Budget::from_env()?.max_terms;
        }
        Ok(Self {
            seed: seed_override.or(common.seed).unwrap_or(0),
            budget,
            force,
            config_hash,
            config_echo,
        })
    }
}

fn parse_config<T: DeserializeOwned + Default>(raw: Option<&str>) -> Result<T> {
    match raw {
        Some(text) => Ok(serde_json::from_str(text)?),
        None => Ok(T::default()),
    }
}

fn finish<R: Serialize>(
    subcommand: &str,
    ctx: &RunContext,
    records: &R,
    csv: String,
    started: Instant,
) -> Result<Outcome> {
    // Round-trip through the 17-digit formatter so the payload does not
    // depend on how serde_json would print floats on its own.
    let records: serde_json::Value = serde_json::from_str(&to_json(records)?)?;
    let finished_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(Outcome {
        result: ExperimentResult {
            tool: TOOL.into(),
            version: VERSION.into(),
            subcommand: subcommand.into(),
            seed: ctx.seed,
            config_hash: ctx.config_hash.clone(),
            config: ctx.config_echo.clone(),
            budget: ctx.budget,
            records,
            timing: Some(Timing {
                wall_clock_secs: started.elapsed().as_secs_f64(),
                finished_at,
            }),
        },
        csv,
        violation: None,
    })
}

/// CSV with a schema comment line, then a header, then `rows`. Every row
/// gets the seed and config hash appended.
fn build_csv(
    subcommand: &str,
    columns: &[&str],
    rows: &[Vec<String>],
    ctx: &RunContext,
) -> Result<String> {
    let mut out = format!("# {TOOL} {subcommand} csv schema v{CSV_SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let header = columns.iter().copied().chain(["seed", "config_hash"]);
        w.write_record(header).map_err(csv_error)?;
        for row in rows {
            let seed = ctx.seed.to_string();
            let fields = row
                .iter()
                .map(String::as_str)
                .chain([seed.as_str(), ctx.config_hash.as_str()]);
            w.write_record(fields).map_err(csv_error)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("CSV fields are UTF-8"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

pub const RATES_COLUMNS: [&str; 9] = [
    "p",
    "q",
    "theta",
    "H_U",
    "C_c",
    "C_sc",
    "R_sep",
    "R_sep_sec",
    "C_wtc",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesRow {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub h_u: f64,
    pub computation_capacity: Rate,
    pub secrecy_computation_capacity: Rate,
    pub separation_rate: Rate,
    /// `None` when the eavesdropper channel is not degraded.
    pub separation_secrecy_rate: Option<Rate>,
    pub wiretap_secrecy_capacity: f64,
    /// Set when `H(q) < H(p)` clipped the wiretap capacity to zero.
    pub wiretap_clipped: bool,
}

fn rates_row(p: f64, q: f64, theta: f64) -> Result<RatesRow> {
    Error::check_prob("p", p, 0.0, 0.5)?;
    Error::check_prob("q", q, 0.0, 1.0)?;
    Error::check_prob("theta", theta, 0.0, 1.0)?;
    let h_u = binary_entropy(theta)?;
    let secrecy = if p < 0.5 {
        match separation_secrecy_rate(p, q, theta) {
            Ok(r) => Some(r),
            Err(Error::Precondition(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let (wtc, clipped) = bsc_wiretap_secrecy_capacity(p, q)?;
    Ok(RatesRow {
        p,
        q,
        theta,
        h_u,
        computation_capacity: computation_capacity(p, h_u)?,
        secrecy_computation_capacity: secrecy_computation_capacity(p, h_u)?,
        separation_rate: separation_computation_rate(p, theta)?,
        separation_secrecy_rate: secrecy,
        wiretap_secrecy_capacity: wtc,
        wiretap_clipped: clipped,
    })
}

pub fn run_rates(config: &RatesConfig, ctx: &RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let mut rows = Vec::new();
    for &p in &config.p {
        for &q in &config.q {
            for &theta in &config.theta {
                let row = rates_row(p, q, theta).map_err(|e| {
                    Error::Precondition(format!(
                        "grid row {} (p={p}, q={q}, theta={theta}): {e}",
                        rows.len()
                    ))
                })?;
                rows.push(row);
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.p),
                fmt_f64(r.q),
                fmt_f64(r.theta),
                fmt_f64(r.h_u),
                fmt_rate(r.computation_capacity),
                fmt_rate(r.secrecy_computation_capacity),
                fmt_rate(r.separation_rate),
                r.separation_secrecy_rate
                    .map_or_else(|| "NA".into(), fmt_rate),
                fmt_f64(r.wiretap_secrecy_capacity),
            ]
        })
        .collect();
    let csv = build_csv("rates", &RATES_COLUMNS, &cells, ctx)?;
    finish("rates", ctx, &rows, csv, started)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageSummary {
    /// One report per code (one in total for uncoded transmission).
    pub per_code: Vec<LeakageReport>,
    pub max_total_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompcodeRecord {
    pub k: usize,
    pub n: usize,
    pub ell: Option<usize>,
    pub rate: f64,
    pub window: Option<RateWindow>,
    pub error: ErrorEstimate,
    pub leakage: Option<LeakageSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_skipped: Option<String>,
}

/// Exact leakage of the given schemes under `mode`. `Ok(Err(reason))`
/// means the computation was skipped.
fn leakage_for<'a>(
    mode: LeakageMode,
    schemes: impl Iterator<Item = Scheme<'a>>,
    joint: &JointPmf,
    q: f64,
    k: usize,
    budget: &Budget,
) -> Result<std::result::Result<Option<LeakageSummary>, String>> {
    if mode == LeakageMode::Off {
        return Ok(Ok(None));
    }
    let mut per_code = Vec::new();
    for scheme in schemes {
        match exact_total_leakage(scheme, joint, q, k, budget) {
            Ok(r) => per_code.push(r),
            Err(e @ Error::BudgetExceeded { .. }) if mode == LeakageMode::WithinBudget => {
                return Ok(Err(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let max_total_bits = per_code.iter().map(|r| r.total_bits).fold(0.0, f64::max);
    Ok(Ok(Some(LeakageSummary {
        per_code,
        max_total_bits,
    })))
}

/// Resolves `ℓ` for a coded point, failing on an empty window unless forced.
fn resolve_ell(point: &CodePoint, h_u: f64, p: f64, force: bool) -> Result<(usize, RateWindow)> {
    let window = rate_window(point.k, point.n, h_u, p.min(0.5))?;
    if window.is_empty() && !force {
        return Err(Error::EmptyRateWindow {
            k: point.k,
            n: point.n,
            lo: window.lo,
            hi: window.hi,
        });
    }
    let ell = match (point.ell, window.midpoint()) {
        (Some(ell), _) | (None, Some(ell)) => ell,
        (None, None) => {
            return Err(Error::Precondition(format!(
                "rate window empty for k={}, n={}; give ell explicitly",
                point.k, point.n
            )))
        }
    };
    Ok((ell, window))
}

pub fn run_compcode(config: &CompcodeConfig, ctx: &RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let joint = config.source.joint()?;
    let h_u = binary_entropy(function_pmf(&joint)[1])?;
    let coded = config.decoder != DecoderKind::Uncoded;

    // All windows are checked before any simulation starts.
    let mut resolved = Vec::new();
    for point in &config.points {
        resolved.push(if coded {
            let (ell, w) = resolve_ell(point, h_u, config.channel.p, ctx.force)?;
            (Some(ell), Some(w))
        } else {
            (None, None)
        });
    }

    let mut records = Vec::new();
    for (point, (ell, window)) in config.points.iter().zip(resolved) {
        let sim = SimulationConfig {
            joint: joint.clone(),
            channel: config.channel,
            k: point.k,
            n: point.n,
            ell: ell.unwrap_or(0),
            decoder: config.decoder,
        };
        let error = simulate_error_prob(
            &sim,
            config.num_codes,
            config.trials_per_code,
            ctx.seed,
            &ctx.budget,
        )?;
        let codes = if coded {
            (0..config.leakage_codes.min(config.num_codes) as u64)
                .map(|c| code_for_index(&sim, ctx.seed, c))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let schemes: Vec<Scheme> = if coded {
            codes.iter().map(Scheme::Coded).collect()
        } else {
            vec![Scheme::Uncoded]
        };
        let (leakage, leakage_skipped) = match leakage_for(
            config.leakage,
            schemes.into_iter(),
            &joint,
            config.channel.q,
            point.k,
            &ctx.budget,
        )? {
            Ok(l) => (l, None),
            Err(reason) => (None, Some(reason)),
        };
        records.push(CompcodeRecord {
            k: point.k,
            n: point.n,
            ell,
            rate: point.k as f64 / point.n as f64,
            window,
            error,
            leakage,
            leakage_skipped,
        });
    }

    let columns = [
        "k",
        "n",
        "ell",
        "rate",
        "in_window",
        "P_e",
        "P_e_ci_low",
        "P_e_ci_high",
        "errors",
        "trials",
        "leakage_bits",
    ];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.n.to_string(),
                r.ell.map_or_else(|| "NA".into(), |l| l.to_string()),
                fmt_f64(r.rate),
                r.error
                    .in_window
                    .map_or_else(|| "NA".into(), |b| b.to_string()),
                fmt_f64(r.error.mean),
                fmt_f64(r.error.ci_low),
                fmt_f64(r.error.ci_high),
                r.error.errors.to_string(),
                r.error.trials.to_string(),
                fmt_opt(r.leakage.as_ref().map(|l| l.max_total_bits)),
            ]
        })
        .collect();
    let csv = build_csv("compcode", &columns, &rows, ctx)?;
    finish("compcode", ctx, &records, csv, started)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageRecord {
    pub code_index: Option<u64>,
    pub q: f64,
    pub report: LeakageReport,
}

pub fn run_leakage(config: &LeakageConfig, ctx: &RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let joint = config.source.joint()?;
    let (n, ell) = match config.scheme {
        LeakageScheme::Uncoded => (config.k, None),
        LeakageScheme::Coded => (config.n, Some(config.ell)),
    };
    let codes = match config.scheme {
        LeakageScheme::Uncoded => Vec::new(),
        LeakageScheme::Coded => {
            let sim = SimulationConfig {
                joint: joint.clone(),
                channel: MawcParams {
                    num_transmitters: joint.num_sources(),
                    p: 0.0,
                    q: 0.0,
                },
                k: config.k,
                n,
                ell: config.ell,
                decoder: DecoderKind::TwoStage,
            };
            (0..config.num_codes as u64)
                .map(|c| code_for_index(&sim, ctx.seed, c))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut records = Vec::new();
    for &q in &config.q {
        Error::check_prob("q", q, 0.0, 1.0)?;
        if codes.is_empty() {
            records.push(LeakageRecord {
                code_index: None,
                q,
                report: exact_total_leakage(Scheme::Uncoded, &joint, q, config.k, &ctx.budget)?,
            });
        }
        for (c, code) in codes.iter().enumerate() {
            records.push(LeakageRecord {
                code_index: Some(c as u64),
                q,
                report: exact_total_leakage(Scheme::Coded(code), &joint, q, config.k, &ctx.budget)?,
            });
        }
    }
    let columns = [
        "code_index",
        "q",
        "k",
        "n",
        "ell",
        "per_source_bits",
        "total_bits",
        "function_bits",
    ];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.code_index.map_or_else(|| "NA".into(), |c| c.to_string()),
                fmt_f64(r.q),
                config.k.to_string(),
                n.to_string(),
                ell.map_or_else(|| "NA".into(), |l| l.to_string()),
                r.report
                    .per_source_bits
                    .iter()
                    .map(|&b| fmt_f64(b))
                    .collect::<Vec<_>>()
                    .join(";"),
                fmt_f64(r.report.total_bits),
                fmt_f64(r.report.function_leakage_bits),
            ]
        })
        .collect();
    let csv = build_csv("leakage", &columns, &rows, ctx)?;
    finish("leakage", ctx, &records, csv, started)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Theorem2Record {
    /// Two sources: condition vs. double symmetry.
    Equivalence(Theorem2Report),
    /// More sources: condition counts only.
    Empirical(ConditionScanReport),
}

pub type ConditionChecker = dyn Fn(&JointPmf, f64) -> bool + Sync;

pub fn run_theorem2(config: &Theorem2Config, ctx: &RunContext) -> Result<Outcome> {
    run_theorem2_with(config, ctx, &condition_check)
}

/// [`run_theorem2`] with a substitute condition checker.
pub fn run_theorem2_with(
    config: &Theorem2Config,
    ctx: &RunContext,
    checker: &ConditionChecker,
) -> Result<Outcome> {
    let started = Instant::now();
    Error::check_prob("tol", config.tol, 0.0, 1.0)?;
    let (record, violation) = if config.num_sources == 2 {
        let report = theorem2_scan_with(config.trials, ctx.seed, config.tol, checker);
        let mut problems = Vec::new();
        if !report.disagreements.is_empty() {
            problems.push(format!(
                "{} disagreements between the condition and double symmetry",
                report.disagreements.len()
            ));
        }
        if let Some(dev) = report.max_accepted_marginal_deviation {
            if dev > config.tol {
                problems.push(format!("accepted PMF has a marginal {dev} away from 1/2"));
            }
        }
        let violation = (!problems.is_empty()).then(|| problems.join("; "));
        (Theorem2Record::Equivalence(report), violation)
    } else {
        let report = condition_scan(config.num_sources, config.trials, ctx.seed, config.tol)?;
        (Theorem2Record::Empirical(report), None)
    };
    let columns = [
        "M",
        "trials",
        "grid_points",
        "condition_passed",
        "condition_failed",
        "disagreements",
        "min_rejected_gap",
        "max_rejected_gap",
        "max_accepted_marginal_deviation",
    ];
    let row = match &record {
        Theorem2Record::Equivalence(r) => vec![
            "2".into(),
            r.random_trials.to_string(),
            r.grid_points.to_string(),
            r.condition_passed.to_string(),
            r.condition_failed.to_string(),
            r.disagreements.len().to_string(),
            fmt_opt(r.min_rejected_gap),
            fmt_opt(r.max_rejected_gap),
            fmt_opt(r.max_accepted_marginal_deviation),
        ],
        Theorem2Record::Empirical(r) => vec![
            r.num_sources.to_string(),
            r.trials.to_string(),
            "0".into(),
            r.condition_passed.to_string(),
            (r.trials - r.condition_passed).to_string(),
            "NA".into(),
            fmt_f64(r.min_gap),
            "NA".into(),
            "NA".into(),
        ],
    };
    let csv = build_csv("theorem2", &columns, &[row], ctx)?;
    let mut outcome = finish("theorem2", ctx, &record, csv, started)?;
    outcome.violation = violation;
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSchemeRecord {
    pub n: usize,
    pub ell: Option<usize>,
    pub rate: f64,
    pub error: ErrorEstimate,
    pub leakage: Option<LeakageSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCompareRecord {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub k: usize,
    pub computation_capacity: Rate,
    pub secrecy_computation_capacity: Rate,
    pub joint: JointSchemeRecord,
    pub separation: SeparationReport,
}

pub fn run_separation_compare(
    config: &SeparationCompareConfig,
    ctx: &RunContext,
) -> Result<Outcome> {
    let started = Instant::now();
    let params = config.channel;
    params.validate_for_capacity()?;
    if params.num_transmitters != 2 {
        return Err(Error::Precondition(format!(
            "separation comparison needs M = 2, got {}",
            params.num_transmitters
        )));
    }
    if config.rand_len > 0 && !ctx.force {
        let gap = crate::channel::degradedness_gap(params.p, params.q)?;
        if let Err(why) = gap {
            return Err(degradation_error(params.p, params.q, why));
        }
    }
    let joint = doubly_symmetric(config.theta)?;
    let h_u = binary_entropy(config.theta)?;

    let coded = config.joint_decoder != DecoderKind::Uncoded;
    let point = CodePoint {
        k: config.k,
        n: config.joint_n,
        ell: config.joint_ell,
    };
    let ell = if coded {
        Some(resolve_ell(&point, h_u, params.p, ctx.force)?.0)
    } else {
        None
    };
    let sim = SimulationConfig {
        joint: joint.clone(),
        channel: params,
        k: config.k,
        n: config.joint_n,
        ell: ell.unwrap_or(0),
        decoder: config.joint_decoder,
    };
    let error = simulate_error_prob(
        &sim,
        config.num_codes,
        config.trials_per_code,
        ctx.seed,
        &ctx.budget,
    )?;
    let codes = if coded {
        (0..config.num_codes as u64)
            .map(|c| code_for_index(&sim, ctx.seed, c))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let schemes: Vec<Scheme> = if coded {
        codes.iter().map(Scheme::Coded).collect()
    } else {
        vec![Scheme::Uncoded]
    };
    let (leakage, leakage_skipped) = match leakage_for(
        config.leakage,
        schemes.into_iter(),
        &joint,
        params.q,
        config.k,
        &ctx.budget,
    )? {
        Ok(l) => (l, None),
        Err(reason) => (None, Some(reason)),
    };
    let joint_record = JointSchemeRecord {
        n: config.joint_n,
        ell,
        rate: config.k as f64 / config.joint_n as f64,
        error,
        leakage,
        leakage_skipped,
    };

    let sep_config = SeparationConfig {
        theta: config.theta,
        channel: params,
        k: config.k,
        km_len: config.km_len,
        rand_len: config.rand_len,
        slot_len: config.slot_len,
        num_codes: config.num_codes,
        trials_per_code: config.trials_per_code,
        leakage: config.leakage != LeakageMode::Off,
    };
    let separation = match separation_pipeline(&sep_config, ctx.seed, &ctx.budget) {
        Err(Error::BudgetExceeded { .. }) if config.leakage == LeakageMode::WithinBudget => {
            separation_pipeline(
                &SeparationConfig {
                    leakage: false,
                    ..sep_config
                },
                ctx.seed,
                &ctx.budget,
            )?
        }
        other => other?,
    };

    let record = SeparationCompareRecord {
        p: params.p,
        q: params.q,
        theta: config.theta,
        k: config.k,
        computation_capacity: computation_capacity(params.p, h_u)?,
        secrecy_computation_capacity: secrecy_computation_capacity(params.p, h_u)?,
        joint: joint_record,
        separation,
    };

    let columns = [
        "scheme",
        "p",
        "q",
        "theta",
        "k",
        "n",
        "rate",
        "P_e",
        "P_e_ci_low",
        "P_e_ci_high",
        "leakage_bits",
        "reference_rate",
    ];
    let common = |scheme: &str,
                  n: usize,
                  rate: f64,
                  e: &ErrorEstimate,
                  leak: Option<f64>,
                  reference: String| {
        vec![
            scheme.to_string(),
            fmt_f64(params.p),
            fmt_f64(params.q),
            fmt_f64(config.theta),
            config.k.to_string(),
            n.to_string(),
            fmt_f64(rate),
            fmt_f64(e.mean),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            fmt_opt(leak),
            reference,
        ]
    };
    let sep = &record.separation;
    let sep_reference = if config.rand_len > 0 {
        sep.separation_secrecy_rate
            .map_or_else(|| "NA".into(), fmt_rate)
    } else {
        fmt_rate(sep.separation_rate)
    };
    let rows = vec![
        common(
            "joint",
            record.joint.n,
            record.joint.rate,
            &record.joint.error,
            record.joint.leakage.as_ref().map(|l| l.max_total_bits),
            fmt_rate(record.secrecy_computation_capacity),
        ),
        common(
            "separation",
            sep.n,
            sep.achieved_rate,
            &sep.error,
            sep.leakage.as_ref().map(|l| l.total_bits),
            sep_reference,
        ),
    ];
    let csv = build_csv("separation", &columns, &rows, ctx)?;
    finish("separation", ctx, &record, csv, started)
}

/// The five experiment kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Rates,
    Compcode,
    Leakage,
    Theorem2,
    Separation,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Rates => "rates",
            Subcommand::Compcode => "compcode",
            Subcommand::Leakage => "leakage",
            Subcommand::Theorem2 => "theorem2",
            Subcommand::Separation => "separation",
        }
    }
}

fn run_typed<T, F>(
    raw: Option<&str>,
    seed: Option<u64>,
    force: bool,
    common: fn(&T) -> &CommonConfig,
    run: F,
) -> Result<Outcome>
where
    T: DeserializeOwned + Serialize + Default,
    F: FnOnce(&T, &RunContext) -> Result<Outcome>,
{
    let config: T = parse_config(raw)?;
    let ctx = RunContext::new(&config, common(&config), raw, seed, force)?;
    run(&config, &ctx)
}

/// Parses `raw` (or uses the defaults) and runs `subcommand`.
pub fn run_from_json(
    subcommand: Subcommand,
    raw: Option<&str>,
    seed: Option<u64>,
    force: bool,
) -> Result<Outcome> {
    match subcommand {
        Subcommand::Rates => run_typed(raw, seed, force, |c: &RatesConfig| &c.common, run_rates),
        Subcommand::Compcode => run_typed(
            raw,
            seed,
            force,
            |c: &CompcodeConfig| &c.common,
            run_compcode,
        ),
        Subcommand::Leakage => {
            run_typed(raw, seed, force, |c: &LeakageConfig| &c.common, run_leakage)
        }
        Subcommand::Theorem2 => run_typed(
            raw,
            seed,
            force,
            |c: &Theorem2Config| &c.common,
            run_theorem2,
        ),
        Subcommand::Separation => run_typed(
            raw,
            seed,
            force,
            |c: &SeparationCompareConfig| &c.common,
            run_separation_compare,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<T: Serialize>(config: &T) -> RunContext {
        RunContext::new(config, &CommonConfig::default(), None, Some(7), false).unwrap()
    }

    fn data_lines(csv: &str) -> Vec<&str> {
        csv.lines().skip(2).collect()
    }

    #[test]
    fn json_floats_have_17_digits() {
        assert_eq!(to_json(&0.1).unwrap(), "1.0000000000000001e-1");
        assert_eq!(to_json(&1.0).unwrap(), "1.0000000000000000e0");
        let back: f64 = serde_json::from_str(&to_json(&0.123_456_789_012_345_67).unwrap()).unwrap();
        assert_eq!(back, 0.123_456_789_012_345_67);
    }

    #[test]
    fn rates_single_point() {
        let config = RatesConfig {
            p: vec![0.0],
            q: vec![0.5],
            theta: vec![0.5],
            ..Default::default()
        };
        let out = run_rates(&config, &ctx(&config)).unwrap();
        assert!(out.csv.starts_with("# mawc rates csv schema v1\n"));
        let header = out.csv.lines().nth(1).unwrap();
        assert_eq!(
            header,
            "p,q,theta,H_U,C_c,C_sc,R_sep,R_sep_sec,C_wtc,seed,config_hash"
        );
        let row: Vec<&str> = data_lines(&out.csv)[0].split(',').collect();
        assert_eq!(row[4].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row[6].parse::<f64>().unwrap(), 0.5);
        assert_eq!(row[9], "7");
        assert_eq!(row[10], out.result.config_hash);
    }

    #[test]
    fn rates_empty_grid_is_header_only() {
        let config = RatesConfig {
            p: vec![],
            ..Default::default()
        };
        let out = run_rates(&config, &ctx(&config)).unwrap();
        assert_eq!(out.csv.lines().count(), 2);
    }

    #[test]
    fn rates_degenerate_and_na_cells() {
        let config = RatesConfig {
            p: vec![0.1],
            q: vec![0.05],
            theta: vec![0.0],
            ..Default::default()
        };
        let out = run_rates(&config, &ctx(&config)).unwrap();
        let row: Vec<&str> = data_lines(&out.csv)[0].split(',').collect();
        assert_eq!(row[4], "degenerate");
        assert_eq!(row[7], "NA");
    }

    #[test]
    fn rates_bad_row_names_context() {
        let config = RatesConfig {
            p: vec![0.1, 0.7],
            ..Default::default()
        };
        let err = run_rates(&config, &ctx(&config)).unwrap_err();
        assert!(err.to_string().contains("grid row 1"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn rates_large_grid_is_fast() {
        let config = RatesConfig {
            p: (0..10).map(|i| i as f64 * 0.05).collect(),
            q: (0..10).map(|i| i as f64 * 0.1).collect(),
            theta: (1..=10).map(|i| i as f64 * 0.09).collect(),
            ..Default::default()
        };
        let start = Instant::now();
        let out = run_rates(&config, &ctx(&config)).unwrap();
        assert_eq!(data_lines(&out.csv).len(), 1000);
        assert!(start.elapsed().as_secs_f64() < 1.0);
    }

    #[test]
    fn compcode_noiseless_uncoded() {
        let config = CompcodeConfig {
            channel: MawcParams::new(2, 0.0, 0.0).unwrap(),
            decoder: DecoderKind::Uncoded,
            points: vec![CodePoint {
                k: 2,
                n: 2,
                ell: None,
            }],
            num_codes: 1,
            trials_per_code: 500,
            ..Default::default()
        };
        let out = run_compcode(&config, &ctx(&config)).unwrap();
        let records: Vec<CompcodeRecord> =
            serde_json::from_value(out.result.records.clone()).unwrap();
        assert_eq!(records[0].error.errors, 0);
        assert!(records[0].leakage.as_ref().unwrap().max_total_bits <= 1e-9);
    }

    #[test]
    fn compcode_empty_window_errors_unless_forced() {
        let config = CompcodeConfig {
            points: vec![CodePoint {
                k: 9,
                n: 10,
                ell: None,
            }],
            num_codes: 1,
            trials_per_code: 1,
            ..Default::default()
        };
        let err = run_compcode(&config, &ctx(&config)).unwrap_err();
        assert!(matches!(err, Error::EmptyRateWindow { k: 9, n: 10, .. }));
        let forced = RunContext {
            force: true,
            ..ctx(&config)
        };
        let config = CompcodeConfig {
            points: vec![CodePoint {
                k: 9,
                n: 10,
                ell: Some(8),
            }],
            ..config
        };
        let out = run_compcode(&config, &forced).unwrap();
        let records: Vec<CompcodeRecord> = serde_json::from_value(out.result.records).unwrap();
        assert_eq!(records[0].error.in_window, Some(false));
    }

    #[test]
    fn compcode_leakage_budget_modes() {
        let base = CompcodeConfig {
            points: vec![CodePoint {
                k: 8,
                n: 16,
                ell: None,
            }],
            num_codes: 1,
            trials_per_code: 2,
            ..Default::default()
        };
        let out = run_compcode(&base, &ctx(&base)).unwrap();
        let records: Vec<CompcodeRecord> = serde_json::from_value(out.result.records).unwrap();
        assert!(records[0].leakage.is_none() && records[0].leakage_skipped.is_some());
        let strict = CompcodeConfig {
            leakage: LeakageMode::On,
            ..base
        };
        let err = run_compcode(&strict, &ctx(&strict)).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn leakage_default_is_zero() {
        let config = LeakageConfig {
            num_codes: 3,
            ..Default::default()
        };
        let out = run_leakage(&config, &ctx(&config)).unwrap();
        assert_eq!(data_lines(&out.csv).len(), 12);
        let records: Vec<LeakageRecord> = serde_json::from_value(out.result.records).unwrap();
        assert!(records.iter().all(|r| r.report.total_bits <= 1e-9));
    }

    #[test]
    fn theorem2_default_passes_and_faulty_checker_fails() {
        let config = Theorem2Config {
            trials: 500,
            ..Default::default()
        };
        let out = run_theorem2(&config, &ctx(&config)).unwrap();
        assert!(out.violation.is_none());
        let faulty = run_theorem2_with(&config, &ctx(&config), &|_, _| true).unwrap();
        assert!(faulty.violation.is_some());
    }

    #[test]
    fn theorem2_empirical_mode() {
        let config = Theorem2Config {
            num_sources: 3,
            trials: 100,
            ..Default::default()
        };
        let out = run_theorem2(&config, &ctx(&config)).unwrap();
        assert!(out.result.records.to_string().contains("empirical"));
    }

    #[test]
    fn separation_default_comparison() {
        let config = SeparationCompareConfig::default();
        let out = run_separation_compare(&config, &ctx(&config)).unwrap();
        let record: SeparationCompareRecord = serde_json::from_value(out.result.records).unwrap();
        assert_eq!(record.joint.rate, 1.0);
        assert_eq!(record.joint.error.errors, 0);
        assert_eq!(record.separation.separation_rate, Rate::Finite(0.5));
        assert_eq!(record.separation.error.errors, 0);
        assert_eq!(data_lines(&out.csv).len(), 2);
    }

    #[test]
    fn separation_checks_degradedness_with_layer() {
        let config = SeparationCompareConfig {
            rand_len: 1,
            slot_len: 3,
            ..Default::default()
        };
        let err = run_separation_compare(&config, &ctx(&config)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let forced = RunContext {
            force: true,
            ..ctx(&config)
        };
        assert!(run_separation_compare(&config, &forced).is_ok());
    }

    #[test]
    fn payload_is_deterministic_and_echoes_config() {
        let raw = r#"{"trials": 200, "tol": 1e-9}"#;
        let a = run_from_json(Subcommand::Theorem2, Some(raw), Some(3), false).unwrap();
        let b = run_from_json(Subcommand::Theorem2, Some(raw), Some(3), false).unwrap();
        assert_eq!(
            a.result.payload_json().unwrap(),
            b.result.payload_json().unwrap()
        );
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.result.config.get(), raw);
        assert!(a.result.to_json().unwrap().contains("timing"));
        assert!(!a.result.payload_json().unwrap().contains("timing"));
    }

    #[test]
    fn seed_precedence() {
        let raw = r#"{"seed": 11, "trials": 10}"#;
        assert_eq!(
            run_from_json(Subcommand::Theorem2, Some(raw), None, false)
                .unwrap()
                .result
                .seed,
            11
        );
        assert_eq!(
            run_from_json(Subcommand::Theorem2, Some(raw), Some(4), false)
                .unwrap()
                .result
                .seed,
            4
        );
        assert_eq!(
            run_from_json(Subcommand::Theorem2, Some(r#"{"trials": 10}"#), None, false)
                .unwrap()
                .result
                .seed,
            0
        );
    }

    #[test]
    fn source_spec_parses_both_forms() {
        let a: SourceSpec =
            serde_json::from_str(r#"{"kind": "doubly_symmetric", "theta": 0.3}"#).unwrap();
        assert_eq!(a, SourceSpec::DoublySymmetric { theta: 0.3 });
        let b: SourceSpec =
            serde_json::from_str(r#"{"kind": "pmf", "M": 2, "probs": [0.1, 0.2, 0.3, 0.4]}"#)
                .unwrap();
        assert_eq!(b.joint().unwrap().num_sources(), 2);
        assert!(serde_json::from_str::<SourceSpec>(
            r#"{"kind": "pmf", "M": 2, "probs": [0.5, 0.6, 0.0, 0.0]}"#
        )
        .is_err());
    }
}
