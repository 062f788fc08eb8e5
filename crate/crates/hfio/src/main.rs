use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hfio::commands::{self, CliError, Context, EXIT_USAGE};
use hfio::config::{RunConfig, MAX_MATRIX_ENV};
use hfio::suite::SuiteOptions;

/// Semiclassical Fourier integral operators: hypothesis checks, kernels,
/// symbol calculus and spectra.
#[derive(Parser)]
#[command(name = "hfio", version, about, after_help = after_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for assembly and dense algebra (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn after_help() -> String {
    format!(
        "Environment:\n  {MAX_MATRIX_ENV}  maximum number of matrix entries (default 16777216)\n\n\
         Exit codes:\n  0  success\n  1  scientific failure (a hypothesis or check did not hold)\n  2  usage or configuration error"
    )
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run at this single h instead of the configured h_list.
    #[arg(long)]
    h: Option<f64>,
    /// Output directory (overrides the configured one).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled checks (overrides the configured one).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check (G1)-(G3) and the H-via-lemma route for the phase.
    Validate(Common),
    /// Sampled symbol-class seminorms of the amplitude.
    Seminorms(Common),
    /// Assemble the kernel matrix and export CSV, binary sidecar and metadata.
    Kernel(Common),
    /// Apply F_h to the input field (bundled Gaussian when none is configured).
    Apply(Common),
    /// Compare extracted and predicted symbols of F_hF_h* or F_h*F_h.
    Compose(Common),
    /// Singular values, uniform boundedness and compactness evidence.
    Spectrum(Common),
    /// Run every acceptance check.
    Suite {
        /// Output directory for suite.json.
        #[arg(long, default_value = "hfio-suite")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> Result<Context, CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(h) = common.h {
        config.h_list = vec![h];
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Context::new(config, common.out.clone())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Validate(c) => commands::validate(&load(&c)?),
        Command::Seminorms(c) => commands::seminorms(&load(&c)?),
        Command::Kernel(c) => commands::kernel(&load(&c)?),
        Command::Apply(c) => commands::apply_cmd(&load(&c)?),
        Command::Compose(c) => commands::compose(&load(&c)?),
        Command::Spectrum(c) => commands::spectrum_cmd(&load(&c)?),
        Command::Suite { out, seed } => {
            let opts = SuiteOptions { seed: seed.unwrap_or(SuiteOptions::default().seed), ..SuiteOptions::default() };
            commands::suite_cmd(&out, &opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
