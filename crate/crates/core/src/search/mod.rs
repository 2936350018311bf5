//! Multi-objective searchers driving an [`Evaluator`] and filling a
//! [`ParetoArchive`].
//!
//! Time is simulated: every evaluation reports a cost in seconds (derived
//! from a floating-point operation count for the model evaluators) and the
//! budget is charged that cost. Runs are therefore reproducible bit for bit
//! regardless of host speed.
//!
//! Evaluations are memoised per search: proposing a config that was already
//! evaluated returns the stored result, costs nothing and adds no history
//! entry. A search also stops once every config of a finite space has been
//! evaluated, or after a long streak of proposals that were all repeats.

mod asha;
mod ehvi;
mod evaluators;
pub mod gp;
mod local;
mod rea;
mod random;

pub use asha::{mo_asha, AshaJob, AshaSettings, RungSchedule};
pub use ehvi::{ehvi_search, expected_hvi_mc, hvi_single, EhviSettings};
pub use evaluators::{config_seed, FnEvaluator, SharedWeightsEvaluator, StandaloneEvaluator, NOMINAL_FLOPS_PER_SECOND};
pub use local::local_search;
pub use rea::{mo_rea, ReaSettings};
pub use random::random_search;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::{ArchiveEntry, ObjectiveVector, ParetoArchive};
use crate::space::{SearchSpace, SubNetConfig};

/// Consecutive repeat proposals after which a search gives up.
pub const MAX_STALE_PROPOSALS: usize = 1000;

/// How thoroughly a config is trained before it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fidelity {
    /// Score the sub-network with the super-network weights as they are.
    SharedWeights,
    /// Fine-tune standalone for this many epochs, then score.
    Epochs(usize),
}

impl Fidelity {
    pub fn epochs(&self) -> Option<usize> {
        match self {
            Fidelity::SharedWeights => None,
            Fidelity::Epochs(e) => Some(*e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    /// Simulated seconds the evaluation took.
    pub cost_s: f64,
}

/// Scores configs. Identical `(config, fidelity)` requests must give
/// identical objectives.
pub trait Evaluator {
    fn evaluate(&mut self, config: &SubNetConfig, fidelity: Fidelity) -> Result<Evaluation>;

    /// The fidelity used by single-fidelity searchers.
    fn full_fidelity(&self) -> Fidelity;
}

/// Search budget; a search stops at whichever limit is hit first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Simulated seconds.
    pub max_seconds: Option<f64>,
    /// Evaluations that actually ran (repeats are free).
    pub max_evaluations: Option<usize>,
}

impl Budget {
    pub fn seconds(s: f64) -> Self {
        Budget {
            max_seconds: Some(s),
            max_evaluations: None,
        }
    }

    pub fn evaluations(n: usize) -> Self {
        Budget {
            max_seconds: None,
            max_evaluations: Some(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.max_seconds, self.max_evaluations) {
            (None, None) => Err(Error::InvalidConfig("budget needs a time or evaluation limit".into())),
            (Some(s), _) if !(s > 0.0) => Err(Error::InvalidConfig(format!("time budget must be > 0, got {s}"))),
            (_, Some(0)) => Err(Error::InvalidConfig("evaluation budget must be > 0".into())),
            _ => Ok(()),
        }
    }

    fn exhausted(&self, clock: f64, evaluations: usize) -> bool {
        self.max_seconds.is_some_and(|s| clock >= s) || self.max_evaluations.is_some_and(|n| evaluations >= n)
    }
}

/// A failed evaluation; the searcher skipped it and carried on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFailure {
    pub config: SubNetConfig,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub archive: ParetoArchive,
    pub failures: Vec<EvaluationFailure>,
    /// Every config proposed, repeats included.
    pub proposals: usize,
    /// MO-ASHA job log in start order; empty for other searchers.
    pub jobs: Vec<AshaJob>,
}

/// Shared bookkeeping of the single-fidelity searchers.
pub(crate) struct SearchContext<'a> {
    pub space: &'a SearchSpace,
    evaluator: &'a mut dyn Evaluator,
    budget: Budget,
    seed: u64,
    clock: f64,
    evaluations: usize,
    stale: usize,
    /// `None` marks a config whose evaluation failed.
    seen: HashMap<SubNetConfig, Option<ObjectiveVector>>,
    outcome: SearchOutcome,
}

impl<'a> SearchContext<'a> {
    pub fn new(space: &'a SearchSpace, evaluator: &'a mut dyn Evaluator, budget: &Budget, seed: u64) -> Result<Self> {
        budget.validate()?;
        Ok(SearchContext {
            space,
            evaluator,
            budget: *budget,
            seed,
            clock: 0.0,
            evaluations: 0,
            stale: 0,
            seen: HashMap::new(),
            outcome: SearchOutcome::default(),
        })
    }

    pub fn done(&self) -> bool {
        self.budget.exhausted(self.clock, self.evaluations)
            || self.stale >= MAX_STALE_PROPOSALS
            || self.space.cardinality().is_some_and(|c| self.seen.len() as u128 >= c)
    }

    pub fn archive(&self) -> &ParetoArchive {
        &self.outcome.archive
    }

    pub fn is_seen(&self, config: &SubNetConfig) -> bool {
        self.seen.contains_key(&self.space.canonicalize(config))
    }

    /// Objectives of `config`, evaluating it if it is new. `None` when the
    /// evaluation failed or the budget was already spent.
    pub fn evaluate(&mut self, config: &SubNetConfig) -> Option<ObjectiveVector> {
        self.outcome.proposals += 1;
        let config = self.space.canonicalize(config);
        if let Some(y) = self.seen.get(&config) {
            self.stale += 1;
            return *y;
        }
        if self.budget.exhausted(self.clock, self.evaluations) {
            return None;
        }
        let fidelity = self.evaluator.full_fidelity();
        match self.evaluator.evaluate(&config, fidelity).and_then(|ev| {
            if ev.objectives.is_finite() && ev.cost_s >= 0.0 {
                Ok(ev)
            } else {
                Err(Error::Evaluation(format!("invalid evaluation result {ev:?}")))
            }
        }) {
            Ok(ev) => {
                self.stale = 0;
                self.evaluations += 1;
                self.clock += ev.cost_s;
                self.seen.insert(config.clone(), Some(ev.objectives));
                self.outcome.archive.insert(ArchiveEntry {
                    config,
                    objectives: ev.objectives,
                    wallclock_s: self.clock,
                    seed: self.seed,
                    fidelity_epochs: fidelity.epochs(),
                });
                Some(ev.objectives)
            }
            Err(e) => {
                log::warn!("evaluation of {config} failed: {e}");
                self.stale += 1;
                // never retry a failing config
                self.seen.insert(config.clone(), None);
                self.outcome.failures.push(EvaluationFailure {
                    config,
                    message: e.to_string(),
                });
                None
            }
        }
    }

    pub fn finish(self) -> SearchOutcome {
        self.outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_validation() {
        assert!(Budget::default().validate().is_err());
        assert!(Budget::seconds(0.0).validate().is_err());
        assert!(Budget::evaluations(0).validate().is_err());
        assert!(Budget::seconds(1.0).validate().is_ok());
        let b = Budget {
            max_seconds: Some(10.0),
            max_evaluations: Some(3),
        };
        assert!(!b.exhausted(9.9, 2));
        assert!(b.exhausted(10.0, 0));
        assert!(b.exhausted(0.0, 3));
    }
}
