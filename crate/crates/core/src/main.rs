use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser};

use mawc::experiment::{
    run_from_json, run_theorem2_with, Outcome, RunContext, Subcommand, Theorem2Config,
};
use mawc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mawc",
    version,
    about = "Secure computation over the binary modulo-2 adder wiretap channel"
)]
enum Cli {
    /// Closed-form capacities and separation rates over a parameter grid.
    Rates(Common),
    /// Monte Carlo error probability and exact leakage of random computation codes.
    Compcode(Common),
    /// Exact eavesdropper leakage of uncoded or coded transmission.
    Leakage(Common),
    /// Scan of the source condition against double symmetry.
    Theorem2 {
        #[command(flatten)]
        common: Common,
        /// Replace the condition checker by one that accepts everything.
        #[arg(long, hide = true)]
        faulty_checker: bool,
    },
    /// Joint computation code against the separation baseline.
    Separation(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON result path; the CSV summary goes next to it with a .csv
    /// extension. Without it, the CSV (rates) or JSON is printed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Proceed despite an empty rate window or failed degradedness check.
    #[arg(long)]
    force: bool,
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(std::fs::read_to_string)
        .transpose()
        .map_err(Error::from)
}

fn emit(sub: Subcommand, outcome: &Outcome, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, outcome.result.to_json()? + "\n")?;
            std::fs::write(path.with_extension("csv"), &outcome.csv)?;
        }
        None if sub == Subcommand::Rates => print!("{}", outcome.csv),
        None => println!("{}", outcome.result.to_json()?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Option<String>> {
    let (sub, common, faulty) = match cli {
        Cli::Rates(c) => (Subcommand::Rates, c, false),
        Cli::Compcode(c) => (Subcommand::Compcode, c, false),
        Cli::Leakage(c) => (Subcommand::Leakage, c, false),
        Cli::Theorem2 {
            common,
            faulty_checker,
        } => (Subcommand::Theorem2, common, faulty_checker),
        Cli::Separation(c) => (Subcommand::Separation, c, false),
    };
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Precondition(format!("worker pool: {e}")))?;
    }
    let raw = read_config(common.config.as_deref())?;
    let outcome = if faulty {
        let config: Theorem2Config = match &raw {
            Some(text) => serde_json::from_str(text)?,
            None => Theorem2Config::default(),
        };
        let ctx = RunContext::new(
            &config,
            &config.common,
            raw.as_deref(),
            common.seed,
            common.force,
        )?;
        run_theorem2_with(&config, &ctx, &|_, _| true)?
    } else {
        run_from_json(sub, raw.as_deref(), common.seed, common.force)?
    };
    emit(sub, &outcome, common.out.as_deref())?;
    Ok(outcome.violation)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(violation)) => {
            eprintln!("error: {}", Error::PropertyViolation(violation));
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
