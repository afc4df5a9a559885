use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spde_core::config::RunConfig;
use spde_core::io::{run, Command};

#[derive(Debug, Parser)]
#[command(
    name = "spde",
    version,
    about = "Simulate SPDEs with fBm and jump noise and measure strong convergence rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Simulate one trajectory and write it as CSV
    Simulate(Args),
    /// Run a temporal or spatial strong-error study
    Convergence(Args),
    /// Statistical checks of the noise generators
    ValidateNoise(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// Monte-Carlo sample count (overrides the config)
    #[arg(long)]
    samples: Option<usize>,
    /// base seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads
    #[arg(long, env = "SPDE_THREADS")]
    threads: Option<usize>,
}

fn resolve(command: Command, args: &Args) -> Result<RunConfig, Box<dyn std::error::Error>> {
    let text =
        std::fs::read_to_string(&args.config).map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.output.directory = args.out.to_string_lossy().into_owned();
    if let Some(n) = args.samples {
        match command {
            Command::ValidateNoise => cfg.validation.samples = n,
            _ => cfg.study.samples = n,
        }
    }
    if let Some(s) = args.seed {
        cfg.study.seed = s;
        cfg.validation.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Convergence(a) => (Command::Convergence, a),
        Sub::ValidateNoise(a) => (Command::ValidateNoise, a),
    };
    let outcome = resolve(command, args).and_then(|cfg| Ok(run(command, &cfg, args.threads)?));
    match outcome {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more pass bands failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
