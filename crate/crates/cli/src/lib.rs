//! Batch driver for the spectral-field verification suites.
//!
//! Every subcommand takes an explicit seed where randomness is involved,
//! embeds it in the emitted report, and produces byte-identical output
//! when rerun with the same inputs. Exit status is zero exactly when all
//! assertions of the invoked suite pass.

pub mod reports;
pub mod suites;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use reports::Format;

#[derive(Parser, Debug)]
#[command(
    name = "specfield",
    about = "Verification suites and experiments for spectral calculus of vector-valued Gaussian stationary fields",
    after_help = "Monte Carlo replicas run in parallel; set RAYON_NUM_THREADS to override the worker count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the structural invariants of a measure file.
    Validate {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Fourier transform of a measure at integer lags (CSV: p, j, j', value).
    Correlation {
        #[arg(long)]
        measure: PathBuf,
        /// semicolon-separated lag vectors with comma-separated entries,
        /// e.g. "0;1;2" or "0,0;1,2"
        #[arg(long)]
        lags: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Empirical sampler moments against their deterministic values.
    Sample {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20000)]
        replicas: usize,
        #[arg(long, default_value = "0;1;2")]
        lags: String,
        /// pass when every estimate is within this many standard errors
        #[arg(long, default_value_t = 4.0)]
        sigmas: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo moments of a kernel's integral against the covariance
    /// calculus.
    ChaosMoments {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 20000)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        sigmas: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Refinement decay of the product-formula defect on seeded random
    /// kernels.
    VerifyDiagram {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        #[arg(long, default_value_t = 4000)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
        /// required defect ratio between consecutive levels
        #[arg(long, default_value_t = 0.75)]
        decay: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Refinement decay of the Wick-vs-integral gap; exact at order 1.
    VerifyIto {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        #[arg(long, default_value_t = 4000)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.75)]
        decay: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Randomized Wick-algebra suites (recursion, expansion, shift).
    VerifyWick {
        #[arg(long, value_enum)]
        suite: suites::WickSuite,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the scaling-limit experiment described by a config file.
    LimitExperiment {
        #[arg(long)]
        config: PathBuf,
        /// directory receiving report.json plus CSV summaries; stdout
        /// when omitted
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

/// Runs one command; `Ok(true)` means every suite assertion passed.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate {
            measure,
            output,
            format,
        } => suites::validate(&measure, output, format),
        Command::Correlation {
            measure,
            lags,
            output,
        } => suites::correlation(&measure, &lags, output),
        Command::Sample {
            measure,
            seed,
            replicas,
            lags,
            sigmas,
            output,
        } => suites::sample(&measure, seed, replicas, &lags, sigmas, output),
        Command::ChaosMoments {
            measure,
            kernel,
            replicas,
            seed,
            sigmas,
            output,
        } => suites::chaos_moments(&measure, &kernel, replicas, seed, sigmas, output),
        Command::VerifyDiagram {
            measure,
            n,
            m,
            refinements,
            replicas,
            seed,
            decay,
            output,
        } => suites::verify_diagram(&measure, n, m, refinements, replicas, seed, decay, output),
        Command::VerifyIto {
            measure,
            n,
            refinements,
            replicas,
            seed,
            decay,
            output,
        } => suites::verify_ito(&measure, n, refinements, replicas, seed, decay, output),
        Command::VerifyWick {
            suite,
            seed,
            instances,
            output,
        } => suites::verify_wick(suite, seed, instances, output),
        Command::LimitExperiment { config, output_dir } => {
            suites::limit_experiment(&config, output_dir)
        }
    }
}

/// Parses "0,1;2,3"-style lag lists.
pub fn parse_lags(text: &str, dim: usize) -> Result<Vec<Vec<i64>>> {
    let mut out = Vec::new();
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let lag: Vec<i64> = part
            .split(',')
            .map(|c| c.trim().parse::<i64>().context("lag entries must be integers"))
            .collect::<Result<_>>()?;
        anyhow::ensure!(
            lag.len() == dim,
            "lag {part:?} has {} entries for a {dim}-dimensional grid",
            lag.len()
        );
        out.push(lag);
    }
    anyhow::ensure!(!out.is_empty(), "empty lag list");
    Ok(out)
}
