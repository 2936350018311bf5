use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Budget, EvaluationFailure, Evaluator, Fidelity, SearchOutcome, MAX_STALE_PROPOSALS};
use crate::error::{Error, Result};
use crate::pareto::{hypervolume_contributions, nondomination_ranks, ArchiveEntry, ObjectiveNormalizer, ObjectiveVector, RefPoint};
use crate::space::{SearchSpace, SubNetConfig};

/// Rungs `r_min·η^k` for `k = 0..=K`, with `r_max = r_min·η^K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RungSchedule {
    pub r_min: usize,
    pub r_max: usize,
    pub eta: usize,
}

impl RungSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.r_min == 0 || self.eta < 2 {
            return Err(Error::InvalidConfig(format!("rung schedule needs r_min >= 1 and eta >= 2, got {self:?}")));
        }
        let mut r = self.r_min;
        while r < self.r_max {
            r = r.checked_mul(self.eta).ok_or_else(|| Error::InvalidConfig("rung schedule overflows".into()))?;
        }
        if r != self.r_max {
            return Err(Error::InvalidConfig(format!(
                "r_max / r_min must be a power of eta, got {} / {} with eta {}",
                self.r_max, self.r_min, self.eta
            )));
        }
        Ok(())
    }

    /// Epoch count of every rung, ascending.
    pub fn rungs(&self) -> Vec<usize> {
        let mut out = vec![self.r_min];
        while *out.last().unwrap() < self.r_max {
            out.push(out.last().unwrap() * self.eta);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AshaSettings {
    pub schedule: RungSchedule,
    /// Simulated parallel workers.
    pub workers: usize,
    /// Stop sampling new configs after this many; only promotions follow.
    pub max_trials: Option<usize>,
}

impl Default for AshaSettings {
    fn default() -> Self {
        AshaSettings {
            schedule: RungSchedule { r_min: 1, r_max: 4, eta: 2 },
            workers: 1,
            max_trials: None,
        }
    }
}

/// One unit of work: train `config` up to rung `rung`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AshaJob {
    pub config: SubNetConfig,
    /// Trial number in order of first appearance.
    pub trial: usize,
    pub rung: usize,
    pub epochs: usize,
    /// Continuation of a config from the rung below.
    pub promoted: bool,
    pub start_s: f64,
    pub end_s: f64,
}

struct Trial {
    config: SubNetConfig,
    /// Uniform tie-break key.
    key: f64,
    results: Vec<ObjectiveVector>,
}

struct InFlight {
    end_s: f64,
    order: usize,
    trial: usize,
    rung: usize,
    result: Result<ObjectiveVector>,
}

/// Trials completed at one rung, best first: non-domination rank, then
/// larger exclusive hypervolume contribution within the rank (objectives
/// quantile-normalised over the rung, reference `(2, 2)`), then the trial's
/// random key.
fn rank_rung(trials: &[Trial], done: &[usize], rung: usize) -> Result<Vec<usize>> {
    let points: Vec<ObjectiveVector> = done.iter().map(|&t| trials[t].results[rung]).collect();
    let ranks = nondomination_ranks(&points);
    let mut contribution = vec![0.0; points.len()];
    if points.len() >= 2 {
        let normalized = ObjectiveNormalizer::fit(&points)?.transform_all(&points);
        let levels = ranks.iter().max().copied().unwrap_or(0);
        for level in 0..=levels {
            let members: Vec<usize> = (0..points.len()).filter(|&i| ranks[i] == level).collect();
            let pts: Vec<ObjectiveVector> = members.iter().map(|&i| normalized[i]).collect();
            for (&i, c) in members.iter().zip(hypervolume_contributions(&pts, RefPoint::default())?) {
                contribution[i] = c;
            }
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        ranks[a]
            .cmp(&ranks[b])
            .then(contribution[b].total_cmp(&contribution[a]))
            .then(trials[done[a]].key.total_cmp(&trials[done[b]].key))
    });
    Ok(order.into_iter().map(|i| done[i]).collect())
}

/// Asynchronous multi-objective successive halving.
///
/// Whenever a worker is free, the highest rung with a promotable trial wins:
/// a trial completed at rung `k` is promotable if it is not yet promoted and
/// sits within the best `⌊n_k/η⌋` of the `n_k` trials completed at `k`,
/// and fewer than `⌊n_k/η⌋` trials have left rung `k` so far. Otherwise a
/// fresh uniform sample starts at the lowest rung. The archive keeps, per
/// config, the result of its highest completed rung.
pub fn mo_asha(space: &SearchSpace, evaluator: &mut dyn Evaluator, budget: &Budget, settings: &AshaSettings, seed: u64) -> Result<SearchOutcome> {
    budget.validate()?;
    settings.schedule.validate()?;
    if settings.workers == 0 {
        return Err(Error::InvalidConfig("MO-ASHA needs at least one worker".into()));
    }
    let rungs = settings.schedule.rungs();
    let eta = settings.schedule.eta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = SearchOutcome::default();
    let mut trials: Vec<Trial> = Vec::new();
    let mut by_config: HashMap<SubNetConfig, usize> = HashMap::new();
    let mut completed: Vec<Vec<usize>> = vec![Vec::new(); rungs.len()];
    let mut promoted: Vec<HashSet<usize>> = vec![HashSet::new(); rungs.len()];
    let mut in_flight: Vec<InFlight> = Vec::new();
    let mut clock = 0.0;
    let mut started = 0usize;
    let mut fresh_exhausted = false;

    loop {
        while in_flight.len() < settings.workers && !budget.exhausted(clock, started) {
            let mut job = None;
            for k in (0..rungs.len() - 1).rev() {
                let quota = completed[k].len() / eta;
                // a trial can leave the top slice after its promotion; the cap
                // keeps promotions from rung k within floor(n_k / eta)
                if promoted[k].len() >= quota {
                    continue;
                }
                let ranked = rank_rung(&trials, &completed[k], k)?;
                if let Some(&t) = ranked[..quota].iter().find(|t| !promoted[k].contains(t)) {
                    promoted[k].insert(t);
                    job = Some((t, k + 1));
                    break;
                }
            }
            if job.is_none() && !fresh_exhausted && settings.max_trials.map_or(true, |m| trials.len() < m) {
                let mut stale = 0;
                while stale < MAX_STALE_PROPOSALS {
                    outcome.proposals += 1;
                    let cfg = space.canonicalize(&space.sample_uniform(&mut rng));
                    if by_config.contains_key(&cfg) {
                        stale += 1;
                        continue;
                    }
                    let t = trials.len();
                    by_config.insert(cfg.clone(), t);
                    trials.push(Trial {
                        config: cfg,
                        key: rng.gen(),
                        results: Vec::new(),
                    });
                    job = Some((t, 0));
                    break;
                }
                fresh_exhausted = job.is_none();
            }
            let Some((t, k)) = job else { break };
            let fidelity = Fidelity::Epochs(rungs[k]);
            let result = evaluator.evaluate(&trials[t].config, fidelity).and_then(|ev| {
                if ev.objectives.is_finite() && ev.cost_s >= 0.0 {
                    Ok(ev)
                } else {
                    Err(Error::Evaluation(format!("invalid evaluation result {ev:?}")))
                }
            });
            let cost = result.as_ref().map_or(0.0, |ev| ev.cost_s);
            outcome.jobs.push(AshaJob {
                config: trials[t].config.clone(),
                trial: t,
                rung: k,
                epochs: rungs[k],
                promoted: k > 0,
                start_s: clock,
                end_s: clock + cost,
            });
            in_flight.push(InFlight {
                end_s: clock + cost,
                order: started,
                trial: t,
                rung: k,
                result: result.map(|ev| ev.objectives),
            });
            started += 1;
        }
        if in_flight.is_empty() {
            break;
        }
        let next = (0..in_flight.len())
            .min_by(|&a, &b| in_flight[a].end_s.total_cmp(&in_flight[b].end_s).then(in_flight[a].order.cmp(&in_flight[b].order)))
            .expect("in-flight queue is non-empty");
        let done = in_flight.swap_remove(next);
        clock = done.end_s;
        match done.result {
            Ok(y) => {
                let trial = &mut trials[done.trial];
                trial.results.push(y);
                debug_assert_eq!(trial.results.len(), done.rung + 1);
                completed[done.rung].push(done.trial);
                outcome.archive.insert_replacing(ArchiveEntry {
                    config: trial.config.clone(),
                    objectives: y,
                    wallclock_s: clock,
                    seed,
                    fidelity_epochs: Some(rungs[done.rung]),
                });
            }
            Err(e) => {
                log::warn!("evaluation of {} failed: {e}", trials[done.trial].config);
                outcome.failures.push(EvaluationFailure {
                    config: trials[done.trial].config.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}
