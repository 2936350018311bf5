use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HistoryRecord, Method, MetricsConfig};
use crate::error::{Error, Result};
use crate::pareto::{
    average_ranks, hypervolume, hypervolume_regret, interpolate_locf, pareto_front_indices, ArchiveEntry, ObjectiveNormalizer, ObjectiveVector,
    ParetoArchive, RefPoint,
};
use crate::tasks::TaskName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvRow {
    pub method: Method,
    pub seed: u64,
    pub wallclock_s: f64,
    pub hv: f64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub method: Method,
    pub time: f64,
    pub mean_rank: f64,
}

/// Hypervolume metrics of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Pooled over every evaluation of every (method, seed); `None` with
    /// fewer than two evaluations.
    pub normalizer: Option<ObjectiveNormalizer>,
    pub best_hv: f64,
    pub hv: Vec<HvRow>,
    pub ranks: Vec<RankRow>,
}

pub(crate) fn record_entry(r: &HistoryRecord) -> ArchiveEntry {
    ArchiveEntry {
        config: r.config.clone(),
        objectives: ObjectiveVector::new(r.f0, r.f1),
        wallclock_s: r.wallclock_s,
        seed: r.seed,
        fidelity_epochs: r.fidelity_epochs,
    }
}

/// Replays a history and returns `(wallclock_s, hv, regret)` after every
/// record. Records of an already seen config replace the earlier result.
pub fn hv_trace(records: &[HistoryRecord], normalizer: &ObjectiveNormalizer, best_hv: f64) -> Result<Vec<(f64, f64, f64)>> {
    let r = RefPoint::default();
    let mut archive = ParetoArchive::new();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        archive.insert_replacing(record_entry(rec));
        let hv = hypervolume(&normalizer.transform_all(&archive.front_points()), r)?;
        let regret = hypervolume_regret(&archive, normalizer, r, best_hv)?;
        out.push((rec.wallclock_s, hv, regret));
    }
    Ok(out)
}

/// Pools every run of one task into hypervolume traces and average ranks.
///
/// The best attainable hypervolume is that of every evaluation ever made,
/// so regret stays non-negative even for histories whose results were later
/// replaced. Ranks use a grid of `grid_points` times from 0 to the latest
/// final wallclock of any run and need at least two methods with results.
pub fn compute_metrics(runs: &[(Method, u64, Vec<HistoryRecord>)], methods: &[Method], cfg: &MetricsConfig) -> Result<Metrics> {
    let all: Vec<ObjectiveVector> = runs.iter().flat_map(|(_, _, h)| h.iter().map(|r| ObjectiveVector::new(r.f0, r.f1))).collect();
    if all.len() < 2 {
        return Ok(Metrics {
            normalizer: None,
            best_hv: 0.0,
            hv: Vec::new(),
            ranks: Vec::new(),
        });
    }
    let normalizer = ObjectiveNormalizer::fit(&all)?;
    let normalized = normalizer.transform_all(&all);
    let front: Vec<ObjectiveVector> = pareto_front_indices(&normalized).into_iter().map(|i| normalized[i]).collect();
    let best_hv = hypervolume(&front, RefPoint::default())?;

    let mut hv = Vec::new();
    let mut traces = Vec::with_capacity(runs.len());
    for (method, seed, records) in runs {
        let trace = hv_trace(records, &normalizer, best_hv)?;
        hv.extend(trace.iter().map(|&(t, h, reg)| HvRow {
            method: *method,
            seed: *seed,
            wallclock_s: t,
            hv: h,
            regret: reg,
        }));
        traces.push(trace);
    }

    let present: Vec<Method> = methods.iter().copied().filter(|m| runs.iter().any(|(rm, _, _)| rm == m)).collect();
    let mut ranks = Vec::new();
    if present.len() >= 2 {
        let t_max = traces.iter().filter_map(|t| t.last().map(|x| x.0)).fold(0.0, f64::max);
        let n = cfg.grid_points;
        let grid: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
        let per_method: Vec<Vec<Vec<f64>>> = present
            .iter()
            .map(|m| {
                runs.iter()
                    .zip(&traces)
                    .filter(|((rm, _, _), _)| rm == m)
                    .map(|(_, t)| {
                        let times: Vec<f64> = t.iter().map(|x| x.0).collect();
                        let values: Vec<f64> = t.iter().map(|x| x.1).collect();
                        interpolate_locf(&times, &values, &grid, 0.0)
                    })
                    .collect()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let avg = average_ranks(&[per_method], cfg.bootstrap_samples, &mut rng)?;
        for (m, row) in present.iter().zip(avg) {
            ranks.extend(grid.iter().zip(row).map(|(&time, mean_rank)| RankRow { method: *m, time, mean_rank }));
        }
    }
    Ok(Metrics {
        normalizer: Some(normalizer),
        best_hv,
        hv,
        ranks,
    })
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl Metrics {
    /// Writes `metrics/{task}_hv.csv` and `metrics/{task}_ranks.csv` (the
    /// latter holds only its header when ranks were not computed).
    pub fn write(&self, out: &Path, task: TaskName) -> Result<()> {
        let dir = out.join("metrics");
        fs::create_dir_all(&dir)?;
        write_csv(&dir.join(format!("{task}_hv.csv")), &["method", "seed", "wallclock_s", "hv", "regret"], &self.hv)?;
        write_csv(&dir.join(format!("{task}_ranks.csv")), &["method", "time", "mean_rank"], &self.ranks)?;
        Ok(())
    }

    pub fn read_hv(path: &Path) -> Result<Vec<HvRow>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        r.deserialize().map(|row| Ok(row?)).collect()
    }

    pub fn read_ranks(path: &Path) -> Result<Vec<RankRow>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        r.deserialize().map(|row| Ok(row?)).collect()
    }
}
