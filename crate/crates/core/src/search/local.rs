use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Budget, Evaluator, SearchContext, SearchOutcome};
use crate::error::{Error, Result};
use crate::space::{SearchSpace, SubNetConfig};

/// Multi-objective local search.
///
/// Evaluates `start`, then repeatedly mutates one coordinate of a config
/// drawn uniformly from the current Pareto front and evaluates the result.
pub fn local_search(space: &SearchSpace, evaluator: &mut dyn Evaluator, budget: &Budget, start: &SubNetConfig, seed: u64) -> Result<SearchOutcome> {
    space.validate(start)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = SearchContext::new(space, evaluator, budget, seed)?;
    ctx.evaluate(start);
    while !ctx.done() {
        let archive = ctx.archive();
        let parent = match archive.front().choose(&mut rng) {
            Some(&i) => archive.history()[i].config.clone(),
            // the start failed; fall back to fresh samples
            None if ctx.archive().is_empty() => space.sample_uniform(&mut rng),
            None => return Err(Error::Evaluation("archive has entries but an empty front".into())),
        };
        let child = space.mutate(&parent, &mut rng)?;
        ctx.evaluate(&child);
    }
    Ok(ctx.finish())
}
