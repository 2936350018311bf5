use crate::error::{Error, Result};
use crate::pareto::ArchiveEntry;
use crate::search::{EvaluationFailure, Evaluator, SearchOutcome, StandaloneEvaluator};
use crate::space::{SearchSpace, SpaceKind, SubNetConfig};
use crate::tasks::Dataset;
use crate::trainer::TrainConfig;
use crate::transformer::{ModelDims, SuperNetwork};

/// LAYER configuration keeping the bottom `layers − dropped` layers.
pub fn layer_drop_config(dims: &ModelDims, dropped: usize) -> SubNetConfig {
    let keep = dims.layers.saturating_sub(dropped);
    SubNetConfig::new(SpaceKind::Layer, (0..dims.layers).map(|l| usize::from(l < keep)).collect())
}

/// Drops the top `n` layers for `n = 0..L` and fine-tunes each result
/// standalone for `train.epochs` epochs. Entries carry the cumulative
/// simulated cost.
pub fn layer_drop_baseline(pretrained: &SuperNetwork, data: &Dataset, train: &TrainConfig, seed: u64) -> Result<SearchOutcome> {
    let dims = pretrained.dims;
    if dims.layers < 2 {
        return Err(Error::InvalidConfig("layer dropping needs at least 2 layers".into()));
    }
    let space = SearchSpace::new(SpaceKind::Layer, dims)?;
    let mut evaluator = StandaloneEvaluator::new(pretrained, &space, data, *train, seed, false);
    let fidelity = evaluator.full_fidelity();
    let mut outcome = SearchOutcome::default();
    let mut clock = 0.0;
    for n in 0..dims.layers {
        let config = layer_drop_config(&dims, n);
        outcome.proposals += 1;
        match evaluator.evaluate(&config, fidelity) {
            Ok(ev) if ev.objectives.is_finite() => {
                clock += ev.cost_s;
                outcome.archive.insert(ArchiveEntry {
                    config,
                    objectives: ev.objectives,
                    wallclock_s: clock,
                    seed,
                    fidelity_epochs: fidelity.epochs(),
                });
            }
            Ok(ev) => outcome.failures.push(EvaluationFailure {
                config,
                message: format!("non-finite objectives {:?}", ev.objectives),
            }),
            Err(e) => outcome.failures.push(EvaluationFailure { config, message: e.to_string() }),
        }
    }
    Ok(outcome)
}
