use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nasprune::harness::{emit_plot_data, run_experiment, train_seed_supernet, ExperimentConfig};
use nasprune::space::SearchSpace;
use nasprune::{Error, Result};
use serde_json::json;

/// Largest space `enumerate-space` will list.
const ENUMERATE_LIMIT: u128 = 1_000_000;

#[derive(Parser)]
#[command(name = "nasprune", version, about = "Multi-objective structural pruning of transformer encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Results directory; overrides `output_dir` of the config.
    #[arg(long, env = "NASPRUNE_OUT")]
    out: Option<PathBuf>,
    /// Overwrite earlier results in the output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads; overrides `threads` of the config.
    #[arg(long, env = "NASPRUNE_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the super-network of one seed and write its checkpoint.
    TrainSupernet {
        #[command(flatten)]
        common: Common,
        /// Defaults to the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every method of the config for a single seed.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every (method, seed) cell of the config and compute metrics.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// Write plot data for an existing results directory.
    EmitPlots {
        /// Results directory.
        #[arg(long, env = "NASPRUNE_OUT")]
        out: PathBuf,
    },
    /// List every configuration of the config's space with its parameter count.
    EnumerateSpace {
        #[arg(long)]
        config: PathBuf,
        /// Write JSON lines here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::InvalidArgument("no output directory (use --out, NASPRUNE_OUT or output_dir)".into()))?;
    cfg.output_dir = Some(out.clone());
    cfg.validate()?;
    Ok((cfg, out))
}

fn pick_seed(cfg: &ExperimentConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(cfg.seeds[0])
}

fn run(command: Command) -> Result<serde_json::Value> {
    match command {
        Command::TrainSupernet { common, seed } => {
            let (cfg, out) = load(&common)?;
            let seed = pick_seed(&cfg, seed);
            let (ckpt, report) = train_seed_supernet(&cfg, seed, &out, common.force)?;
            Ok(json!({"checkpoint": ckpt, "seed": seed, "steps": report.steps, "final_loss": report.losses.last()}))
        }
        Command::Search { common, seed } => {
            let (mut cfg, out) = load(&common)?;
            cfg.seeds = vec![pick_seed(&cfg, seed)];
            let summary = run_experiment(&cfg, &out, common.force)?;
            Ok(json!({"out": out, "histories": summary.histories.len(), "failures": summary.failures.len()}))
        }
        Command::Benchmark { common } => {
            let (cfg, out) = load(&common)?;
            let summary = run_experiment(&cfg, &out, common.force)?;
            Ok(json!({"out": out, "histories": summary.histories.len(), "failures": summary.failures.len(), "best_hv": summary.metrics.best_hv}))
        }
        Command::EmitPlots { out } => {
            let files = emit_plot_data(&out)?;
            Ok(json!({"files": files}))
        }
        Command::EnumerateSpace { config, out, force } => {
            let cfg = ExperimentConfig::load(&config)?;
            let space = SearchSpace::new(cfg.space, cfg.model)?;
            let configs = space
                .enumerate(ENUMERATE_LIMIT)
                .ok_or_else(|| Error::InvalidArgument(format!("{} has more than {ENUMERATE_LIMIT} configurations", cfg.space)))?;
            let mut sink: Box<dyn Write> = match &out {
                Some(p) if p.exists() && !force => return Err(Error::OutputExists(p.display().to_string())),
                Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
                None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
            };
            for c in &configs {
                let params = space.param_count(c)?.0;
                writeln!(sink, "{}", json!({"config": c, "param_count": params}))?;
            }
            sink.flush()?;
            Ok(json!({"space": cfg.space, "configs": configs.len()}))
        }
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim()),
    };
    let enumerate_to_stdout = matches!(&cli.command, Command::EnumerateSpace { out: None, .. });
    match run(cli.command) {
        Ok(summary) => {
            if enumerate_to_stdout {
                log::info!("{summary}");
            } else {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
