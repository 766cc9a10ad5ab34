use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scanlab::{run_experiment, ExperimentKind, ScanConfig, ScanError};

#[derive(Parser)]
#[command(name = "scanlab", version, about = "Echo and decoherence experiments on the quantum kicked rotor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// F(t) for each environment in the list
    EchoSeries(Flags),
    /// Window statistics against the coupling g_bar
    CouplingScan(Flags),
    /// Window statistics against hbar_eff with slope fits
    HbarScan(Flags),
    /// Cat-state relaxation toward equilibrium
    Equilibrate(Flags),
    /// Two-qubit entanglement and sudden death
    Bipartite(Flags),
    /// CUE moments and RMT constants
    RmtCheck(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// Configuration file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for scan points
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Seed, overriding `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 4 when a self-check fails
    #[arg(long)]
    check: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, Flags) {
        match self {
            Command::EchoSeries(f) => (ExperimentKind::EchoSeries, f),
            Command::CouplingScan(f) => (ExperimentKind::CouplingScan, f),
            Command::HbarScan(f) => (ExperimentKind::HbarScan, f),
            Command::Equilibrate(f) => (ExperimentKind::Equilibrate, f),
            Command::Bipartite(f) => (ExperimentKind::Bipartite, f),
            Command::RmtCheck(f) => (ExperimentKind::RmtCheck, f),
        }
    }
}

fn load(flags: &Flags) -> Result<ScanConfig, ScanError> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ScanError::Config(format!("cannot read {}: {e}", path.display())))?;
            ScanConfig::parse(&text)?
        }
        None => ScanConfig::default(),
    };
    if let Some(out) = &flags.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(kind: ExperimentKind, flags: &Flags) -> Result<bool, ScanError> {
    let cfg = load(flags)?;
    let art = run_experiment(kind, &cfg, flags.workers)?;
    art.write_to(&cfg.output_dir, kind, &cfg)?;
    for c in &art.checks {
        println!("{}", c.line());
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(art.all_checks_pass())
}

fn main() -> ExitCode {
    kickecho::linalg::use_sequential_kernels();
    let (kind, flags) = Cli::parse().command.split();
    match run(kind, &flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if flags.check => ExitCode::from(4),
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scanlab {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
