//! `ddrom`: snapshot generation, autoencoder training, ROM solves and
//! benchmarks driven by one TOML configuration.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddrom::Error;

#[derive(Parser, Debug)]
#[command(name = "ddrom", version, about = "Domain-decomposed LS/NM reduced-order models for 2D Burgers")]
struct Cli {
    /// Configuration file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute artifacts that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Validate the configuration and print the plan without doing work.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the FOM over the parameter grid and store the snapshot database.
    Snapshots,
    /// Train the interior and interface autoencoders of every subdomain.
    Train {
        /// Only train this subdomain's pair (repeatable).
        #[arg(long)]
        subdomain: Vec<usize>,
    },
    /// Solve one ROM at the test parameter and print its report.
    Solve(SolveArgs),
    /// Benchmark LS and NM ROMs with and without HR; write CSV tables.
    Bench,
    /// Print the default configuration.
    PrintDefaults {
        /// Desk-scale defaults (122x14 mesh, 12x12 parameters).
        #[arg(long)]
        desk: bool,
    },
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, value_enum, default_value_t = RomKind::Ls)]
    rom: RomKind,
    /// Latent sizes `n_omega,n_gamma`; defaults to the first configured size.
    #[arg(long, value_parser = parse_sizes)]
    size: Option<(usize, usize)>,
    /// Use the hyper-reduced residual.
    #[arg(long)]
    hr: bool,
    /// Defaults to strong for the identity ROM, weak otherwise.
    #[arg(long, value_enum)]
    constraints: Option<ConstraintKind>,
    /// Test parameter `a`.
    #[arg(long)]
    a: Option<f64>,
    /// Test parameter `lambda`.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RomKind {
    /// Identity decoders: the DD FOM through the ROM code path.
    Identity,
    /// POD decoders.
    Ls,
    /// Sparse autoencoder decoders.
    Nm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ConstraintKind {
    Strong,
    Weak,
}

fn parse_sizes(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected n_omega,n_gamma")?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingArtifacts(_) | Error::Format { .. } | Error::Checksum(_) | Error::Consistency(_) => 3,
        Error::InvalidGrid(_) | Error::InvalidParams(_) | Error::InvalidArgument(_) | Error::Config(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::MissingArtifacts(paths) => {
                    eprintln!("error: {} required artifact(s) missing; run the command that produces them", paths.len());
                    for p in paths {
                        eprintln!("  missing: {}", p.display());
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
