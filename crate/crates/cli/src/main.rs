use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlirf_cli::commands::print_outcome;
use nlirf_cli::{cmd_diagnose, cmd_estimate, cmd_irf, cmd_mc, cmd_relax_check, cmd_simulate, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "nlirf", version, about = "Nonlinear impulse responses with relaxed shocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the selected section.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root of the content-addressed output directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Use the published replication counts for `mc`.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate a path from a model
    Simulate,
    /// Fit the two-step sieve estimator to a CSV or a simulated path
    Estimate,
    /// Population, sieve, parametric and linear impulse responses
    Irf,
    /// Monte Carlo study of MSE and bias
    Mc,
    /// Dependence profile and contractivity report
    Diagnose,
    /// Shock-size compatibility of a relaxation function
    RelaxCheck,
}

fn section<T>(s: Option<T>, name: &str) -> Result<T, CliError> {
    s.ok_or_else(|| CliError::Config(format!("configuration has no [{name}] section")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let out = match cli.command {
        Command::Simulate => {
            let mut c = section(cfg.simulate, "simulate")?;
            c.seed = cli.seed.unwrap_or(c.seed);
            cmd_simulate(&c, &cli.out)?
        }
        Command::Estimate => {
            let mut c = section(cfg.estimate, "estimate")?;
            c.seed = cli.seed.unwrap_or(c.seed);
            cmd_estimate(&c, &cli.out)?
        }
        Command::Irf => {
            let mut c = section(cfg.irf, "irf")?;
            c.seed = cli.seed.unwrap_or(c.seed);
            cmd_irf(&c, &cli.out)?
        }
        Command::Mc => {
            let mut c = section(cfg.mc, "mc")?;
            c.master_seed = cli.seed.unwrap_or(c.master_seed);
            if cli.paper_scale {
                c = c.paper_scale();
            }
            cmd_mc(&c, &cli.out)?
        }
        Command::Diagnose => {
            let mut c = section(cfg.diagnose, "diagnose")?;
            c.seed = cli.seed.unwrap_or(c.seed);
            cmd_diagnose(&c, &cli.out)?
        }
        Command::RelaxCheck => cmd_relax_check(&section(cfg.relax_check, "relax_check")?, &cli.out)?,
    };
    print_outcome(&out);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
