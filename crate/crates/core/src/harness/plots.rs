use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::{hv_trace, record_entry};
use super::{read_histories, ExperimentConfig, Method, Metrics};
use crate::error::{Error, Result};
use crate::pareto::{interpolate_locf, ObjectiveNormalizer, ObjectiveVector, ParetoArchive};
use crate::space::{SearchSpace, SpaceKind};

/// Parameter-count samples drawn per search space.
pub const PARAM_SAMPLES: usize = 500;
const HIST_BINS: usize = 20;

#[derive(Serialize)]
struct FrontRow {
    method: Method,
    seed: u64,
    f0: f64,
    f1: f64,
    f0_norm: f64,
    f1_norm: f64,
}

#[derive(Serialize)]
struct RegretRow {
    method: Method,
    time: f64,
    mean_regret: f64,
    min_regret: f64,
    max_regret: f64,
}

#[derive(Serialize)]
struct ParamRow {
    space: SpaceKind,
    sample: usize,
    param_count: u64,
}

#[derive(Serialize)]
struct BinRow {
    space: SpaceKind,
    lo: f64,
    hi: f64,
    count: usize,
}

fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingInput(path.display().to_string()))
    }
}

/// Writes plot-ready CSVs into `dir/plots`:
///
/// * `fronts.csv`: final Pareto front of every (method, seed), raw and normalised
/// * `regret.csv`: hypervolume regret per method on a shared time grid
/// * `ranks.csv`: average ranks over time
/// * `param_samples.csv`, `param_hist.csv`: parameter counts of uniform samples
///   from every search space
///
/// Every input is read before anything is written; a missing input leaves
/// no partial output.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let config_path = dir.join("config.json");
    require(&config_path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&config_path)?)?;
    let hv_path = dir.join("metrics").join(format!("{}_hv.csv", cfg.task));
    let ranks_path = dir.join("metrics").join(format!("{}_ranks.csv", cfg.task));
    require(&hv_path)?;
    require(&ranks_path)?;
    let histories = read_histories(dir)?;
    if histories.is_empty() {
        return Err(Error::MissingInput(format!("no history files in {}", dir.join("histories").display())));
    }
    let hv_rows = Metrics::read_hv(&hv_path)?;
    let rank_rows = Metrics::read_ranks(&ranks_path)?;

    let all: Vec<ObjectiveVector> = histories.iter().flat_map(|(_, h)| h.iter().map(|r| ObjectiveVector::new(r.f0, r.f1))).collect();
    let normalizer = ObjectiveNormalizer::fit(&all)?;
    let best_hv = hv_rows.first().map_or(0.0, |r| r.hv + r.regret);

    let mut fronts = Vec::new();
    let mut regret_traces: BTreeMap<String, (Method, Vec<(Vec<f64>, Vec<f64>)>)> = BTreeMap::new();
    for (_, records) in &histories {
        let Some(first) = records.first() else { continue };
        let mut archive = ParetoArchive::new();
        let trace = hv_trace(records, &normalizer, best_hv)?;
        for r in records {
            archive.insert_replacing(record_entry(r));
        }
        for e in archive.front_entries() {
            let n = normalizer.transform(&e.objectives);
            fronts.push(FrontRow {
                method: first.method,
                seed: first.seed,
                f0: e.objectives.f0,
                f1: e.objectives.f1,
                f0_norm: n.f0,
                f1_norm: n.f1,
            });
        }
        regret_traces
            .entry(first.method.to_string())
            .or_insert_with(|| (first.method, Vec::new()))
            .1
            .push((trace.iter().map(|t| t.0).collect(), trace.iter().map(|t| t.2).collect()));
    }

    let t_max = histories.iter().filter_map(|(_, h)| h.last().map(|r| r.wallclock_s)).fold(0.0, f64::max);
    let n = cfg.metrics.grid_points;
    let grid: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
    let mut regret = Vec::new();
    for (method, traces) in regret_traces.values() {
        let curves: Vec<Vec<f64>> = traces.iter().map(|(t, v)| interpolate_locf(t, v, &grid, best_hv)).collect();
        for (i, &time) in grid.iter().enumerate() {
            let col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            regret.push(RegretRow {
                method: *method,
                time,
                mean_regret: col.iter().sum::<f64>() / col.len() as f64,
                min_regret: col.iter().copied().fold(f64::INFINITY, f64::min),
                max_regret: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.metrics.seed);
    let mut samples = Vec::new();
    let mut bins = Vec::new();
    for kind in SpaceKind::ALL {
        let space = SearchSpace::new(kind, cfg.model)?;
        let counts: Vec<u64> = (0..PARAM_SAMPLES)
            .map(|_| space.param_count(&space.sample_uniform(&mut rng)).map(|p| p.0))
            .collect::<Result<_>>()?;
        samples.extend(counts.iter().enumerate().map(|(sample, &param_count)| ParamRow { space: kind, sample, param_count }));
        let lo = space.param_count(&space.min_config())?.0 as f64;
        let hi = space.param_count(&space.max_config())?.0 as f64;
        let width = ((hi - lo) / HIST_BINS as f64).max(f64::MIN_POSITIVE);
        let mut hist = vec![0usize; HIST_BINS];
        for &c in &counts {
            hist[(((c as f64 - lo) / width) as usize).min(HIST_BINS - 1)] += 1;
        }
        bins.extend(hist.into_iter().enumerate().map(|(b, count)| BinRow {
            space: kind,
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count,
        }));
    }

    let outputs = [
        ("fronts.csv", to_csv(&["method", "seed", "f0", "f1", "f0_norm", "f1_norm"], &fronts)?),
        ("regret.csv", to_csv(&["method", "time", "mean_regret", "min_regret", "max_regret"], &regret)?),
        ("ranks.csv", to_csv(&["method", "time", "mean_rank"], &rank_rows)?),
        ("param_samples.csv", to_csv(&["space", "sample", "param_count"], &samples)?),
        ("param_hist.csv", to_csv(&["space", "lo", "hi", "count"], &bins)?),
    ];
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    for (name, bytes) in outputs {
        let path = plots.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}
