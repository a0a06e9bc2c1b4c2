//! `specx`: spectral geometry experiments on triangle meshes.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::SweepKind;
use config::{Flags, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "specx", version, about = "Laplace and Steklov eigenvalue experiments on triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Laplace, Steklov or measure eigenvalues.
    Eigs(Flags),
    /// Maximize the normalized first eigenvalue over conformal densities.
    Maximize(Flags),
    /// Min-max over a Möbius family of Ginzburg–Landau energies.
    Glminmax(Flags),
    /// Conformal volume of a map.
    Vc(Flags),
    /// Steklov eigenvalues of a domain, punctured if the surface is closed.
    Steklov(Flags),
    /// Spectral and energy index of a harmonic map.
    Index(Flags),
    /// Parameter sweeps.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    #[command(flatten)]
    flags: Flags,
}

fn run(cli: Cli, env_out: Option<PathBuf>) -> Result<(), CliError> {
    let resolve = |name: &str, flags: Flags| RunConfig::resolve(name, flags, env_out.clone());
    match cli.command {
        Command::Eigs(f) => commands::eigs(resolve("eigs", f)?),
        Command::Maximize(f) => commands::maximize(resolve("maximize", f)?),
        Command::Glminmax(f) => commands::glminmax(resolve("glminmax", f)?),
        Command::Vc(f) => commands::vc(resolve("vc", f)?),
        Command::Steklov(f) => commands::steklov(resolve("steklov", f)?),
        Command::Index(f) => commands::index(resolve("index", f)?),
        Command::Sweep(s) => commands::sweep(s.kind, resolve("sweep", s.flags)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli, std::env::var_os("SPECX_OUT").map(PathBuf::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("specx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
