use anyhow::Result;
use augsearch_cli::{pipeline, resolve_workers, ConfigError, PipelineConfig, Run};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "augsearch",
    version,
    about = "Search depth-image augmentation sequences for sim-to-real transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides AUGSEARCH_THREADS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use the original dataset sizes and plateau patience.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the sim train/val and pseudo-real datasets.
    GenData,
    /// Score each transform kind on its own.
    EvalTransforms,
    /// Search sequences for every learned-k baseline.
    Search,
    /// Score all configured baselines.
    Compare,
    /// Train and roll out behavior-cloned policies.
    Bc,
    /// Export original/augmented PGM pairs.
    Preview {
        #[arg(long)]
        sequence: String,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Dataset file; defaults to the generated sim training set.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let env = std::env::var("AUGSEARCH_THREADS").ok();
    let workers = resolve_workers(cli.workers, env.as_deref())?;
    let run = Run::new(&cfg, workers);
    log::info!("config sha256 {} with {workers} workers", cfg.sha256());
    match &cli.command {
        Command::GenData => {
            for p in pipeline::gen_data(&run)? {
                println!("{}", p.display());
            }
        }
        Command::EvalTransforms => {
            pipeline::eval_transforms(&run)?;
            println!("{}", run.path(pipeline::TABLE1_FILE).display());
        }
        Command::Search => {
            for o in pipeline::search(&run)? {
                println!(
                    "k={}: {} ({:.2} cm)",
                    o.length,
                    o.best_sequence,
                    o.best_score * 100.0
                );
            }
        }
        Command::Compare => {
            pipeline::compare(&run)?;
            println!("{}", run.path(pipeline::TABLE2_FILE).display());
        }
        Command::Bc => {
            pipeline::bc(&run)?;
            println!("{}", run.path(pipeline::TABLE3_FILE).display());
        }
        Command::Preview {
            sequence,
            count,
            dataset,
        } => {
            for (a, b) in pipeline::preview(&run, sequence, *count, dataset.as_deref())? {
                println!("{} {}", a.display(), b.display());
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
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
