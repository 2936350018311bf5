use std::collections::HashMap;

use super::{Evaluation, Evaluator, Fidelity};
use crate::error::{Error, Result};
use crate::pareto::ObjectiveVector;
use crate::space::{SearchSpace, SubNetConfig};
use crate::tasks::Dataset;
use crate::trainer::{evaluate_subnet, forward_flops, StandaloneRun, TrainConfig};
use crate::transformer::SuperNetwork;

/// Throughput assumed by the simulated clock.
pub const NOMINAL_FLOPS_PER_SECOND: f64 = 1e9;

/// A backward pass is charged as twice a forward pass.
const TRAIN_FLOPS_FACTOR: f64 = 3.0;

/// Seed of the standalone run of `config`, independent of evaluation order.
pub fn config_seed(seed: u64, config: &SubNetConfig) -> u64 {
    // splitmix64 folded over the values
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &v in std::iter::once(&(config.space as usize)).chain(&config.values) {
        h = h.wrapping_add(v as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

fn eval_cost(space: &SearchSpace, config: &SubNetConfig, data: &Dataset, examples: usize, factor: f64) -> Result<f64> {
    let mask = space.create_mask(config)?;
    Ok(examples as f64 * factor * forward_flops(&space.dims, &mask, data.task.seq_len) / NOMINAL_FLOPS_PER_SECOND)
}

/// Scores sub-networks with the trained super-network weights (one pass over
/// the validation split).
pub struct SharedWeightsEvaluator<'a> {
    pub net: &'a SuperNetwork,
    pub space: &'a SearchSpace,
    pub data: &'a Dataset,
}

impl Evaluator for SharedWeightsEvaluator<'_> {
    fn evaluate(&mut self, config: &SubNetConfig, fidelity: Fidelity) -> Result<Evaluation> {
        if fidelity != Fidelity::SharedWeights {
            return Err(Error::InvalidArgument(format!("shared-weight evaluator cannot train ({fidelity:?})")));
        }
        let objectives = evaluate_subnet(self.net, self.space, config, self.data)?;
        let cost_s = eval_cost(self.space, config, self.data, self.data.valid.len(), 1.0)?;
        Ok(Evaluation { objectives, cost_s })
    }

    fn full_fidelity(&self) -> Fidelity {
        Fidelity::SharedWeights
    }
}

/// Fine-tunes each sub-network on a copy of the pre-trained weights.
///
/// With `keep_runs`, partially trained runs are cached so that asking for a
/// higher epoch count only pays for the extra epochs. Training a config to
/// `e` epochs gives the same result whether or not it passed through lower
/// epoch counts first.
pub struct StandaloneEvaluator<'a> {
    pub pretrained: &'a SuperNetwork,
    pub space: &'a SearchSpace,
    pub data: &'a Dataset,
    pub train: TrainConfig,
    pub seed: u64,
    pub keep_runs: bool,
    runs: HashMap<SubNetConfig, StandaloneRun>,
}

impl<'a> StandaloneEvaluator<'a> {
    pub fn new(pretrained: &'a SuperNetwork, space: &'a SearchSpace, data: &'a Dataset, train: TrainConfig, seed: u64, keep_runs: bool) -> Self {
        StandaloneEvaluator {
            pretrained,
            space,
            data,
            train,
            seed,
            keep_runs,
            runs: HashMap::new(),
        }
    }
}

impl Evaluator for StandaloneEvaluator<'_> {
    fn evaluate(&mut self, config: &SubNetConfig, fidelity: Fidelity) -> Result<Evaluation> {
        let epochs = match fidelity {
            Fidelity::Epochs(e) => e,
            Fidelity::SharedWeights => self.train.epochs,
        };
        let mut run = match self.runs.remove(config) {
            Some(run) if run.epochs_done() <= epochs => run,
            _ => StandaloneRun::new(self.pretrained, self.space, config, config_seed(self.seed, config))?,
        };
        let extra = epochs - run.epochs_done();
        run.train_to(epochs, self.data, &self.train)?;
        let objectives = run.evaluate(self.space, self.data)?;
        let cost_s = eval_cost(self.space, config, self.data, extra * self.data.train.len(), TRAIN_FLOPS_FACTOR)?
            + eval_cost(self.space, config, self.data, self.data.valid.len(), 1.0)?;
        if self.keep_runs {
            self.runs.insert(config.clone(), run);
        }
        Ok(Evaluation { objectives, cost_s })
    }

    fn full_fidelity(&self) -> Fidelity {
        Fidelity::Epochs(self.train.epochs)
    }
}

/// Wraps a closure; each call costs a fixed number of simulated seconds per
/// unit of fidelity (shared weights count as one unit).
pub struct FnEvaluator<F> {
    pub f: F,
    pub cost_per_unit_s: f64,
    pub full: Fidelity,
}

impl<F: FnMut(&SubNetConfig, Fidelity) -> ObjectiveVector> FnEvaluator<F> {
    pub fn new(f: F) -> Self {
        FnEvaluator {
            f,
            cost_per_unit_s: 1.0,
            full: Fidelity::SharedWeights,
        }
    }
}

impl<F: FnMut(&SubNetConfig, Fidelity) -> ObjectiveVector> Evaluator for FnEvaluator<F> {
    fn evaluate(&mut self, config: &SubNetConfig, fidelity: Fidelity) -> Result<Evaluation> {
        let units = fidelity.epochs().unwrap_or(1) as f64;
        Ok(Evaluation {
            objectives: (self.f)(config, fidelity),
            cost_s: self.cost_per_unit_s * units,
        })
    }

    fn full_fidelity(&self) -> Fidelity {
        self.full
    }
}
