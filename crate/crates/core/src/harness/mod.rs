//! Experiment orchestration: super-network training per seed, every
//! (method, seed) search, JSON-lines histories, hypervolume metrics and plot
//! data.
//!
//! Layout of a results directory:
//!
//! ```text
//! config.json                      resolved experiment config
//! histories/{method}__seed{s}.jsonl one record per evaluation
//! metrics/{task}_hv.csv            method,seed,wallclock_s,hv,regret
//! metrics/{task}_ranks.csv         method,time,mean_rank
//! checkpoints/supernet__seed{s}.json
//! reports/train__seed{s}.json
//! failures.json                    (method, seed) cells that failed
//! plots/                           written by `emit_plot_data`
//! ```

mod config;
mod layer_drop;
mod metrics;
mod plots;

pub use config::{Budgets, DataConfig, ExperimentConfig, Method, MetricsConfig, Searcher, SearcherSettings};
pub use layer_drop::{layer_drop_baseline, layer_drop_config};
pub use metrics::{compute_metrics, hv_trace, HvRow, Metrics, RankRow};
pub use plots::emit_plot_data;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::ArchiveEntry;
use crate::search::{
    ehvi_search, local_search, mo_asha, mo_rea, random_search, Budget, Evaluator, SearchOutcome, SharedWeightsEvaluator, StandaloneEvaluator,
};
use crate::space::{SearchSpace, SpaceKind, SubNetConfig};
use crate::tasks::{Dataset, TaskName};
use crate::trainer::{train_supernet, TrainReport};
use crate::transformer::{save_checkpoint, SuperNetwork};

/// One line of a history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub method: Method,
    pub task: TaskName,
    pub seed: u64,
    pub space: SpaceKind,
    pub config: SubNetConfig,
    pub f0: f64,
    pub f1: f64,
    pub fidelity_epochs: Option<usize>,
    pub wallclock_s: f64,
}

impl HistoryRecord {
    pub fn from_entry(method: Method, task: TaskName, entry: &ArchiveEntry) -> Self {
        HistoryRecord {
            method,
            task,
            seed: entry.seed,
            space: entry.config.space,
            config: entry.config.clone(),
            f0: entry.objectives.f0,
            f1: entry.objectives.f1,
            fidelity_epochs: entry.fidelity_epochs,
            wallclock_s: entry.wallclock_s,
        }
    }
}

pub fn history_file_name(method: Method, seed: u64) -> String {
    format!("{method}__seed{seed}.jsonl")
}

pub fn write_history(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// A (method, seed) cell that did not finish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: Method,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub histories: Vec<PathBuf>,
    pub failures: Vec<CellFailure>,
    pub metrics: Metrics,
}

/// Files and directories owned by a results directory.
const ARTIFACTS: [&str; 7] = ["config.json", "histories", "metrics", "checkpoints", "reports", "failures.json", "plots"];

fn prepare_output(out: &Path, force: bool) -> Result<()> {
    let existing: Vec<PathBuf> = ARTIFACTS.iter().map(|a| out.join(a)).filter(|p| p.exists()).collect();
    if !existing.is_empty() {
        if !force {
            return Err(Error::OutputExists(out.display().to_string()));
        }
        for p in existing {
            if p.is_dir() {
                fs::remove_dir_all(&p)?;
            } else {
                fs::remove_file(&p)?;
            }
        }
    }
    for sub in ["histories", "metrics", "checkpoints", "reports"] {
        fs::create_dir_all(out.join(sub))?;
    }
    Ok(())
}

struct SeedResult {
    seed: u64,
    supernet: Option<(SuperNetwork, TrainReport)>,
    cells: Vec<(Method, Result<SearchOutcome>)>,
}

/// The untrained starting weights of seed `seed`; shared by super-network
/// training, standalone fine-tuning and layer dropping.
pub fn pretrained_network(cfg: &ExperimentConfig, seed: u64) -> Result<SuperNetwork> {
    SuperNetwork::init(cfg.model, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn budget(cfg: &ExperimentConfig, seconds: f64) -> Budget {
    Budget {
        max_seconds: Some(seconds),
        max_evaluations: cfg.budgets.max_evaluations,
    }
}

/// Runs one searcher. `supernet` must be given for weight-sharing methods.
pub fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
    data: &Dataset,
    supernet: Option<&SuperNetwork>,
    pretrained: &SuperNetwork,
) -> Result<SearchOutcome> {
    let space = SearchSpace::new(cfg.space, cfg.model)?;
    let run = |searcher: config::Searcher, evaluator: &mut dyn Evaluator, budget: Budget| -> Result<SearchOutcome> {
        use config::Searcher as S;
        match searcher {
            S::Random => random_search(&space, evaluator, &budget, seed),
            S::Local => local_search(&space, evaluator, &budget, &space.max_config(), seed),
            S::Evolution => mo_rea(&space, evaluator, &budget, &cfg.searchers.rea, seed),
            S::Ehvi => ehvi_search(&space, evaluator, &budget, &cfg.searchers.ehvi, seed),
            S::Asha => mo_asha(&space, evaluator, &budget, &cfg.searchers.asha, seed),
        }
    };
    match method {
        Method::WeightSharing(s) => {
            let net = supernet.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a trained super-network")))?;
            let mut ev = SharedWeightsEvaluator { net, space: &space, data };
            run(s, &mut ev, budget(cfg, cfg.budgets.ws_seconds))
        }
        Method::Standalone(s) => {
            let mut ev = StandaloneEvaluator::new(pretrained, &space, data, cfg.training, seed, s == config::Searcher::Asha);
            run(s, &mut ev, budget(cfg, cfg.budgets.standalone_seconds))
        }
        Method::LayerDrop => layer_drop_baseline(pretrained, data, &cfg.training, seed),
    }
}

fn run_seed(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> SeedResult {
    let setup = SearchSpace::new(cfg.space, cfg.model).and_then(|space| Ok((space, pretrained_network(cfg, seed)?)));
    let (space, pretrained) = match setup {
        Ok(x) => x,
        Err(e) => {
            let message = e.to_string();
            let cells = cfg.methods.iter().map(|&m| (m, Err(Error::InvalidConfig(message.clone())))).collect();
            return SeedResult { seed, supernet: None, cells };
        }
    };
    let supernet = cfg.methods.iter().any(Method::needs_supernet).then(|| {
        let mut net = pretrained.clone();
        let report = train_supernet(&mut net, data, &space, &cfg.strategy, &cfg.training, seed)?;
        log::info!("seed {seed}: super-network trained ({} steps)", report.steps);
        Ok::<_, Error>((net, report))
    });
    let cells = cfg
        .methods
        .iter()
        .map(|&m| {
            let outcome = match &supernet {
                Some(Err(e)) if m.needs_supernet() => Err(Error::Evaluation(format!("super-network training failed: {e}"))),
                sn => {
                    let net = sn.as_ref().and_then(|r| r.as_ref().ok()).map(|(n, _)| n);
                    run_method(cfg, m, seed, data, net, &pretrained)
                }
            };
            if let Err(e) = &outcome {
                log::warn!("{m} seed {seed} failed: {e}");
            }
            (m, outcome)
        })
        .collect();
    SeedResult {
        seed,
        supernet: supernet.and_then(|r| r.ok()),
        cells,
    }
}

/// Runs every (method, seed) cell of `cfg` and writes the results to `out`.
///
/// Refuses to touch a directory holding earlier results unless `force`.
/// A failing cell is recorded in `failures.json`; the others still run.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, force: bool) -> Result<ExperimentSummary> {
    cfg.validate()?;
    prepare_output(out, force)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let data = cfg.task_spec().generate()?;

    let threads = cfg.threads.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<SeedResult> = pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, &data, s)).collect());

    // single collector: everything below is written sequentially
    let mut histories = Vec::new();
    let mut failures = Vec::new();
    let mut runs = Vec::new();
    for r in results {
        if let Some((net, report)) = &r.supernet {
            let ckpt = out.join("checkpoints").join(format!("supernet__seed{}.json", r.seed));
            save_checkpoint(net, &ckpt)?;
            let mut report = report.clone();
            report.checkpoint = Some(format!("checkpoints/supernet__seed{}.json", r.seed));
            report.wallclock_s = 0.0; // host timing would break byte-identical reruns
            fs::write(out.join("reports").join(format!("train__seed{}.json", r.seed)), serde_json::to_string_pretty(&report)?)?;
        }
        for (method, outcome) in r.cells {
            match outcome {
                Ok(o) => {
                    let records: Vec<HistoryRecord> = o.archive.history().iter().map(|e| HistoryRecord::from_entry(method, cfg.task, e)).collect();
                    let path = out.join("histories").join(history_file_name(method, r.seed));
                    write_history(&path, &records)?;
                    histories.push(path);
                    for f in o.failures {
                        failures.push(CellFailure {
                            method,
                            seed: r.seed,
                            kind: "evaluation".into(),
                            message: format!("{}: {}", f.config, f.message),
                        });
                    }
                    runs.push((method, r.seed, records));
                }
                Err(e) => failures.push(CellFailure {
                    method,
                    seed: r.seed,
                    kind: e.kind().into(),
                    message: e.to_string(),
                }),
            }
        }
    }
    fs::write(out.join("failures.json"), serde_json::to_string_pretty(&failures)?)?;
    let metrics = compute_metrics(&runs, &cfg.methods, &cfg.metrics)?;
    metrics.write(out, cfg.task)?;
    Ok(ExperimentSummary {
        out_dir: out.to_path_buf(),
        histories,
        failures,
        metrics,
    })
}

/// Reads every history file of a results directory, sorted by file name.
pub fn read_histories(dir: &Path) -> Result<Vec<(PathBuf, Vec<HistoryRecord>)>> {
    let hist = dir.join("histories");
    let mut paths: Vec<PathBuf> = fs::read_dir(&hist)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", hist.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.into_iter().map(|p| read_history(&p).map(|r| (p, r))).collect()
}

/// Trains the super-network of one seed and writes
/// `checkpoints/supernet__seed{s}.json` and `reports/train__seed{s}.json`
/// under `out`. Returns the checkpoint path.
pub fn train_seed_supernet(cfg: &ExperimentConfig, seed: u64, out: &Path, force: bool) -> Result<(PathBuf, TrainReport)> {
    cfg.validate()?;
    let ckpt = out.join("checkpoints").join(format!("supernet__seed{seed}.json"));
    let report_path = out.join("reports").join(format!("train__seed{seed}.json"));
    if !force && (ckpt.exists() || report_path.exists()) {
        return Err(Error::OutputExists(ckpt.display().to_string()));
    }
    let data = cfg.task_spec().generate()?;
    let space = SearchSpace::new(cfg.space, cfg.model)?;
    let mut net = pretrained_network(cfg, seed)?;
    let mut report = train_supernet(&mut net, &data, &space, &cfg.strategy, &cfg.training, seed)?;
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::create_dir_all(out.join("reports"))?;
    save_checkpoint(&net, &ckpt)?;
    report.checkpoint = Some(format!("checkpoints/supernet__seed{seed}.json"));
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    Ok((ckpt, report))
}
