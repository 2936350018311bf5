use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Budget, Evaluator, SearchContext, SearchOutcome};
use crate::error::Result;
use crate::space::SearchSpace;

/// Evaluates uniformly sampled configs until the budget runs out.
pub fn random_search(space: &SearchSpace, evaluator: &mut dyn Evaluator, budget: &Budget, seed: u64) -> Result<SearchOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = SearchContext::new(space, evaluator, budget, seed)?;
    while !ctx.done() {
        let cfg = space.sample_uniform(&mut rng);
        ctx.evaluate(&cfg);
    }
    Ok(ctx.finish())
}
