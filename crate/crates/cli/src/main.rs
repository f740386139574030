//! `rydsim`: run one experiment from a config file and write its outputs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rydberg_transfer::io::{parse_config, run, Experiment, RunConfig};
use rydberg_transfer::Error;

#[derive(Parser, Debug)]
#[command(name = "rydsim", version, about = "Resonant energy transfer between two clouds of Rydberg atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (`key = value unit` per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    shots: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads, 0 = all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Two atoms at a fixed distance; quantum beats.
    Pair,
    /// Transferred fraction against field.
    FieldScan,
    /// Transferred fraction against cloud separation.
    PositionScan,
    /// Transferred fraction against time for several separations.
    TimeScan,
    /// Fixed against convergence-driven neighbour truncation.
    Converge,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Pair => Experiment::Pair,
            Command::FieldScan => Experiment::FieldScan,
            Command::PositionScan => Experiment::PositionScan,
            Command::TimeScan => Experiment::TimeScan,
            Command::Converge => Experiment::ConvergenceStudy,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" => 2,
        "domain" => 3,
        "numerical" => 4,
        "model" => 5,
        "geometry" => 6,
        "resource" => 7,
        "ensemble" => 8,
        "io" => 9,
        _ => 1,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.experiment = cli.command.experiment();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(shots) = cli.shots {
        if shots == 0 {
            return Err(Error::Config("--shots must be >= 1".into()));
        }
        cfg.shots = shots;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| run(&cfg, cli.workers).map(|m| (cfg, m)));
    match result {
        Ok((cfg, manifest)) => {
            println!("{} done, {} files in {}", manifest.experiment, manifest.files.len() + 1, cfg.out_dir.display());
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rydsim: {} error: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
