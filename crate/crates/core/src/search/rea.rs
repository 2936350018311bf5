use std::collections::VecDeque;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Budget, Evaluator, SearchContext, SearchOutcome};
use crate::error::{Error, Result};
use crate::pareto::{nondomination_ranks, ObjectiveVector};
use crate::space::{SearchSpace, SubNetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaSettings {
    pub population_size: usize,
    pub sample_size: usize,
}

impl Default for ReaSettings {
    fn default() -> Self {
        ReaSettings {
            population_size: 20,
            sample_size: 5,
        }
    }
}

/// Multi-objective regularised evolution.
///
/// The population starts from uniform samples. Each iteration draws
/// `sample_size` members without replacement, mutates the one with the
/// lowest non-domination rank inside that sample (ties broken uniformly),
/// appends the child and evicts the oldest member once the population is
/// over size. Repeat children re-use their stored objectives.
pub fn mo_rea(space: &SearchSpace, evaluator: &mut dyn Evaluator, budget: &Budget, settings: &ReaSettings, seed: u64) -> Result<SearchOutcome> {
    let ReaSettings { population_size, sample_size } = *settings;
    if sample_size == 0 || population_size < sample_size {
        return Err(Error::InvalidConfig(format!(
            "MO-REA needs population_size >= sample_size >= 1, got {population_size} and {sample_size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = SearchContext::new(space, evaluator, budget, seed)?;
    let mut population: VecDeque<(SubNetConfig, ObjectiveVector)> = VecDeque::with_capacity(population_size + 1);
    while population.len() < population_size && !ctx.done() {
        let cfg = space.sample_uniform(&mut rng);
        if let Some(y) = ctx.evaluate(&cfg) {
            population.push_back((space.canonicalize(&cfg), y));
        }
    }
    while !ctx.done() && !population.is_empty() {
        let k = sample_size.min(population.len());
        let picked: Vec<usize> = index::sample(&mut rng, population.len(), k).into_vec();
        let points: Vec<ObjectiveVector> = picked.iter().map(|&i| population[i].1).collect();
        let ranks = nondomination_ranks(&points);
        let best = *ranks.iter().min().expect("sample is non-empty");
        let ties: Vec<usize> = (0..k).filter(|&j| ranks[j] == best).collect();
        let parent = &population[picked[*ties.choose(&mut rng).expect("at least one tie")]].0;
        let child = space.mutate(parent, &mut rng)?;
        if let Some(y) = ctx.evaluate(&child) {
            population.push_back((space.canonicalize(&child), y));
            if population.len() > population_size {
                population.pop_front();
            }
        }
    }
    Ok(ctx.finish())
}
