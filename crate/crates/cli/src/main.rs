use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use room_agent_core::harness;
use room_agent_core::ExperimentConfig;

/// Train, evaluate and compare memory-management agents in the room
/// environment.
#[derive(Parser, Debug)]
#[command(name = "room-agent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Experiment config file (`key = value` lines, `include` allowed).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset instead of a file: `paper.env` or `desk.env`.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Run with this single seed instead of the configured list.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one agent per configured capacity and seed.
    Train(ConfigArgs),
    /// Evaluate a checkpoint greedily on test episodes.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Evaluate every configured agent, capacity and seed.
    Sweep(ConfigArgs),
    /// Record one greedy episode with Q-values and memory snapshots.
    Trace {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Write a synthetic knowledge base as TSV.
    GenKb {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        objects: usize,
        #[arg(long, default_value_t = 28)]
        locations: usize,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

/// Failures before any work starts are configuration errors.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)
                .with_context(|| format!("loading {}", path.display())),
            (None, Some(name)) => ExperimentConfig::from_preset(name).context("loading preset"),
            (None, None) => Err(anyhow::anyhow!("either --config or --preset is required")),
        }
        .map_err(Failure::Config)?;
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()
            .context("invalid configuration")
            .map_err(Failure::Config)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let run = |r: Result<()>| r.map_err(Failure::Run);
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            run((|| {
                for path in harness::cmd_train(&cfg)? {
                    println!("{}", path.display());
                }
                Ok(())
            })())
        }
        Command::Eval { config, checkpoint } => {
            let cfg = config.load()?;
            run((|| {
                print!("{}", harness::cmd_eval(&cfg, &checkpoint)?);
                Ok(())
            })())
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            run((|| {
                let report = harness::cmd_sweep(&cfg)?;
                print!("{}", report.table_csv(&cfg.agents, &cfg.capacities));
                let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
                for c in report.cells.iter() {
                    if let Err(e) = &c.outcome {
                        eprintln!("cell {} cap {} seed {} failed: {e}", c.agent, c.capacity, c.seed);
                    }
                }
                anyhow::ensure!(failed == 0, "{failed} sweep cells failed");
                Ok(())
            })())
        }
        Command::Trace { config, checkpoint } => {
            let cfg = config.load()?;
            run((|| {
                println!("{}", harness::cmd_trace(&cfg, &checkpoint)?.display());
                Ok(())
            })())
        }
        Command::GenKb {
            seed,
            objects,
            locations,
            out,
        } => harness::cmd_gen_kb(seed, objects, locations, &out)
            .context("generating knowledge base")
            .map_err(Failure::Config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
