use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hallflow_cli::{default_config, run_to_dir, Command, RunConfig};

#[derive(Parser)]
#[command(name = "hallflow", version, about = "Hall response of lattice fermions on a magnetic torus")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides outputs.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for grid scans.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed (overrides the config seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// One-body spectrum over a flux grid.
    Spectrum,
    /// Gaps of the one-body spectrum with Chern labels.
    GapMap,
    /// One-body Chern markers at the configured flux and mu.
    Chern,
    /// Many-body Hall conductivity with one-body oracles.
    Sigma,
    /// Exact diagonalization and gap certificate.
    EdGround,
    /// NEASS generators and the current response over the epsilon grid.
    NeassScan,
    /// Hall conductivity before and after a periodic automorphism.
    CsCheck,
    /// Quasi-free Hall conductance statistics.
    ConductanceVar,
    /// Seeded identity checks.
    Selftest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Spectrum => Command::Spectrum,
            Cmd::GapMap => Command::GapMap,
            Cmd::Chern => Command::Chern,
            Cmd::Sigma => Command::Sigma,
            Cmd::EdGround => Command::EdGround,
            Cmd::NeassScan => Command::NeassScan,
            Cmd::CsCheck => Command::CsCheck,
            Cmd::ConductanceVar => Command::ConductanceVar,
            Cmd::Selftest => Command::Selftest,
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads")?;
    }
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => default_config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.outputs.directory));
    let cmd: Command = cli.command.into();
    let manifest = run_to_dir(cmd, config, cli.config.as_deref(), &out)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, out.join(&o.path).display());
    }
    println!("manifest digest {}", manifest.digest);
    Ok(!(cmd == Command::Selftest && !manifest.warnings.is_empty()))
}
