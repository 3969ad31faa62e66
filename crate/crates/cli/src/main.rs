//! `tvlab`: command-line front end for the total-variation flow laboratory.
//!
//! Exit codes: 0 when every verdict passes, 2 when a verdict fails, 1 on errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "tvlab",
    version,
    about = "Numerical laboratory for the parabolic total variation flow"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the diagnostic commands.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; its diagnostics block supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Field file (TVF1).
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Directory for report files; reports always go to stdout as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation point `x,y[,z],t`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// Radii, comma separated, strictly decreasing.
    #[arg(long)]
    pub rhos: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Paper,
    Empirical,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Plus,
    Minus,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the implicit Euler flow and write field, dual and manifest files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continuity indicator along a ladder of radii.
    Indicator {
        #[command(flatten)]
        common: Common,
        /// Largest radius of the default dyadic ladder (used without --rhos).
        #[arg(long)]
        rho0: Option<f64>,
        /// Fit the log-log slope over `lo,hi` only.
        #[arg(long)]
        fit: Option<String>,
    },
    /// Randomized certification suites.
    Certify {
        #[command(subcommand)]
        which: CertifyCmd,
    },
    /// Iteration lemma, its recursion and the expansion of positivity.
    Degiorgi {
        #[command(subcommand)]
        which: DegiorgiCmd,
    },
    /// Oscillation-decay cascade at a point.
    Cascade {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
        /// Shrinking parameter in empirical mode.
        #[arg(long, default_value_t = 0.5)]
        xi: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
    },
    /// Total variation of one slice over a ball, with its dual lower bound.
    Tv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: f64,
    },
    /// Describe a closed-form example; with --config and --times also sample it.
    Example {
        #[arg(long)]
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Time stamps `t0,t1,...` for sampling.
        #[arg(long)]
        times: Option<String>,
        /// Radius for the closed-form total variation.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Subcells per axis for cell averages (1 samples at centres).
        #[arg(long, default_value_t = 1)]
        cell_average: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sup-bound shape over a seeded corpus of cylinders.
    Supbound {
        #[command(flatten)]
        common: Common,
        /// Integrability exponent; defaults to N + 1.
        #[arg(long)]
        r: Option<f64>,
        /// Radius range `lo,hi`.
        #[arg(long)]
        rho_range: String,
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CertifyCmd {
    /// Parabolic-minimizer inequality against a perturbation corpus.
    Minimizer {
        #[command(flatten)]
        common: Common,
        /// Time derivative field; backward differences of --field when omitted.
        #[arg(long)]
        ut: Option<PathBuf>,
        /// Ball radius about the spatial part of --point.
        #[arg(long)]
        radius: f64,
        /// Time window `a,b`.
        #[arg(long)]
        window: String,
        #[arg(long)]
        count: Option<usize>,
        /// Constant C in the consistency tolerance C (h + dt).
        #[arg(long)]
        c: Option<f64>,
    },
    /// Energy inequality over random cylinders, truncations and cutoffs.
    Energy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        /// Allowed relative deficit.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// 1-Laplacian inequality for truncations, with the dual field.
    Onelap {
        #[command(flatten)]
        common: Common,
        /// Dual field file (TVZ1).
        #[arg(long)]
        dual: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum DegiorgiCmd {
    /// The recursion `Y_{n+1} = gamma b^n Y_n^{1+1/N}`.
    Iterate {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        /// `at-critical` (Y0 = nu) or a number.
        #[arg(long = "Y0")]
        y0: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure-to-pointwise lemma on one cylinder.
    Lemma {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        xi: f64,
        #[arg(long, value_enum, default_value_t = SignArg::Minus)]
        sign: SignArg,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
    },
    /// Expansion of positivity from the slice at the point's time.
    Expansion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        xi: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("TVLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("TVLAB_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("TVLAB_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = init_threads().and_then(|_| commands::run(cli.command));
    match run {
        Ok(output::Verdict::Pass) => ExitCode::SUCCESS,
        Ok(output::Verdict::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
