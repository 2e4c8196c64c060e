use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asl_core::env::load_scenario;
use asl_core::harness::{aggregate_glob, evaluate_checkpoint, load_config, plot_metrics, run_experiment};

#[derive(Parser)]
#[command(name = "asl", about = "PPO with symmetry losses on equivariant toy robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed (or every seed in the config when --seed is omitted).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's out_dir, then `runs/<config stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hidden layers [64, 64] and 2e5 total steps.
        #[arg(long)]
        desk: bool,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Mean deterministic return of a checkpoint on a scenario's evaluation goals.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 16)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean and standard deviation across metrics files.
    Aggregate {
        #[arg(long)]
        glob: String,
        #[arg(long, default_value = "aggregate.csv")]
        out: PathBuf,
    },
    /// SVG line charts of a metrics file.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        /// Defaults to the directory of the CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> asl_core::Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            desk,
            resume,
        } => {
            let mut cfg = load_config(&config)?;
            if desk {
                cfg = cfg.desk();
            }
            let root = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| {
                PathBuf::from("runs").join(config.file_stem().unwrap_or_default())
            });
            let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
            for s in seeds {
                let dir = root.join(format!("seed{s}"));
                log::info!("training seed {s} into {}", dir.display());
                let outcome = run_experiment(&cfg, s, &dir, resume)?;
                match outcome.final_eval() {
                    Some(r) => println!("seed {s}: final evaluation return {r:.4} ({})", outcome.metrics.display()),
                    None => println!("seed {s}: no evaluation in this run ({})", outcome.metrics.display()),
                }
            }
        }
        Command::Eval {
            checkpoint,
            scenario,
            episodes,
            seed,
        } => {
            let sc = load_scenario(&scenario)?;
            println!("{:.6}", evaluate_checkpoint(&checkpoint, &sc, episodes, seed)?);
        }
        Command::Aggregate { glob, out } => {
            let n = aggregate_glob(&glob, &out)?;
            println!("aggregated {n} files into {}", out.display());
        }
        Command::Plot { csv, out } => {
            let dir = out.unwrap_or_else(|| csv.parent().map(PathBuf::from).unwrap_or_default());
            for f in plot_metrics(&csv, &dir)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
