//! `hdqkd`: regenerates the simulated experiment as data files and runs the
//! two-party protocol, in-process or over TCP.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use hdqkd_core::SessionError;

use crate::config::{ConfigError, RawConfig};
use crate::output::{OutDir, Provenance};

#[derive(Parser)]
#[command(name = "hdqkd", version, about = "Three-dimensional OAM QKD simulator")]
struct Cli {
    /// Flat `key = value` config file; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a config key, e.g. `--set protocol.n_rounds=100000`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 6×6 crosstalk matrix and the 36 decoded far-field images.
    Crosstalk,
    /// Lifetime histogram and fit, HBT histograms and g2(0) per gate.
    G2,
    /// Key rate against error rate for d = 2 and d = 3.
    KeyrateSweep,
    /// Both parties in-process over a loopback pipe.
    Run,
    /// Alice: listen on `net.addr` and run the session.
    Alice,
    /// Bob: connect to `net.addr` and run the session.
    Bob,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    if e.downcast_ref::<commands::QberAbort>().is_some() {
        return EXIT_ABORT;
    }
    match e.downcast_ref::<SessionError>() {
        Some(SessionError::Aborted { .. }) => EXIT_ABORT,
        Some(SessionError::Transport(_) | SessionError::Incomplete) => EXIT_TRANSPORT,
        Some(SessionError::Protocol(_)) => EXIT_CONFIG,
        None => 1,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut raw = RawConfig::default();
    if let Some(path) = &cli.config {
        raw.apply_file(path)?;
    }
    for assignment in &cli.set {
        raw.apply_override(assignment)?;
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string())?;
    }
    let cfg = raw.parse()?;
    let out = OutDir::create(&cli.out, Provenance::new(&cfg))?;
    eprintln!("{}", out.provenance().line());
    match cli.command {
        Command::Crosstalk => commands::crosstalk(&cfg, &out),
        Command::G2 => commands::g2(&cfg, &out),
        Command::KeyrateSweep => commands::keyrate_sweep(&cfg, &out),
        Command::Run => commands::run(&cfg, &out),
        Command::Alice => commands::alice(&cfg, &out),
        Command::Bob => commands::bob(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
