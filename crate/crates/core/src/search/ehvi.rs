use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gp::{GpFitSettings, GpModel};
use super::{Budget, Evaluator, SearchContext, SearchOutcome};
use crate::error::{Error, Result};
use crate::pareto::{pareto_front_indices, ObjectiveNormalizer, ObjectiveVector, RefPoint};
use crate::space::{SearchSpace, SubNetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EhviSettings {
    pub init_points: usize,
    pub candidates_per_iter: usize,
    pub mc_samples: usize,
}

impl Default for EhviSettings {
    fn default() -> Self {
        EhviSettings {
            init_points: 5,
            candidates_per_iter: 128,
            mc_samples: 512,
        }
    }
}

/// Non-dominated, de-duplicated points sorted by ascending `f0`.
fn staircase(points: &[ObjectiveVector]) -> Vec<ObjectiveVector> {
    let mut front: Vec<ObjectiveVector> = pareto_front_indices(points).into_iter().map(|i| points[i]).collect();
    front.sort_by(|a, b| a.f0.total_cmp(&b.f0).then(a.f1.total_cmp(&b.f1)));
    front.dedup();
    front
}

/// `HV(front ∪ {y}) − HV(front)` for a staircase (see the sort order above).
pub fn hvi_single(front: &[ObjectiveVector], y: &ObjectiveVector, r: RefPoint) -> f64 {
    let [r0, r1] = r.0;
    if !(y.f0 < r0 && y.f1 < r1) {
        return 0.0;
    }
    // front height at x = y.f0: lowest f1 among points left of y
    let start = front.partition_point(|p| p.f0 <= y.f0);
    let mut level = if start > 0 { front[start - 1].f1.min(r1) } else { r1 };
    let mut x = y.f0;
    let mut hvi = 0.0;
    for p in &front[start..] {
        if level <= y.f1 {
            return hvi;
        }
        hvi += (p.f0.min(r0) - x) * (level - y.f1);
        x = p.f0.min(r0);
        level = level.min(p.f1);
    }
    if level > y.f1 {
        hvi += (r0 - x) * (level - y.f1);
    }
    hvi
}

/// Monte-Carlo expected hypervolume improvement of a candidate with
/// independent Gaussian posteriors per objective.
///
/// `eps` holds standard-normal pairs (shared across candidates so their
/// estimates are comparable); each draw `mean + sd·eps` is mapped into the
/// space of `front` by `to_front_space` before scoring.
pub fn expected_hvi_mc(
    front: &[ObjectiveVector],
    mean: [f64; 2],
    sd: [f64; 2],
    eps: &[[f64; 2]],
    r: RefPoint,
    to_front_space: impl Fn(ObjectiveVector) -> ObjectiveVector,
) -> f64 {
    if eps.is_empty() {
        return 0.0;
    }
    let front = staircase(front);
    let total: f64 = eps
        .iter()
        .map(|e| {
            let y = to_front_space(ObjectiveVector::new(mean[0] + sd[0] * e[0], mean[1] + sd[1] * e[1]));
            hvi_single(&front, &y, r)
        })
        .sum();
    total / eps.len() as f64
}

/// Bayesian optimisation with expected hypervolume improvement.
///
/// A Gaussian process is fitted to every evaluation so far; candidates are
/// uniform samples scored by Monte-Carlo EHVI against the current front in
/// quantile-normalised objective space with reference point `(2, 2)`. When
/// the GP cannot be fitted the iteration evaluates a uniform sample instead.
pub fn ehvi_search(space: &SearchSpace, evaluator: &mut dyn Evaluator, budget: &Budget, settings: &EhviSettings, seed: u64) -> Result<SearchOutcome> {
    if settings.init_points < 2 || settings.candidates_per_iter == 0 || settings.mc_samples == 0 {
        return Err(Error::InvalidConfig(format!("invalid EHVI settings {settings:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = SearchContext::new(space, evaluator, budget, seed)?;
    let r = RefPoint::default();
    let gp_settings = GpFitSettings::for_dim(space.dimensionality());

    while !ctx.done() && ctx.archive().len() < settings.init_points {
        let cfg = space.sample_uniform(&mut rng);
        ctx.evaluate(&cfg);
    }
    while !ctx.done() {
        let proposal = match propose(&ctx, space, settings, &gp_settings, r, &mut rng) {
            Ok(Some(cfg)) => cfg,
            Ok(None) => space.sample_uniform(&mut rng),
            Err(e) => {
                log::warn!("EHVI proposal failed, sampling uniformly: {e}");
                space.sample_uniform(&mut rng)
            }
        };
        ctx.evaluate(&proposal);
    }
    Ok(ctx.finish())
}

fn propose(
    ctx: &SearchContext<'_>,
    space: &SearchSpace,
    settings: &EhviSettings,
    gp_settings: &GpFitSettings,
    r: RefPoint,
    rng: &mut ChaCha8Rng,
) -> Result<Option<SubNetConfig>> {
    let history = ctx.archive().history();
    if history.len() < 2 {
        return Ok(None);
    }
    let observed: Vec<ObjectiveVector> = history.iter().map(|e| e.objectives).collect();
    let x: Vec<Vec<f64>> = history.iter().map(|e| space.encode_unit(&e.config)).collect();
    let y: Vec<Vec<f64>> = observed.iter().map(|o| vec![o.f0, o.f1]).collect();
    let normalizer = ObjectiveNormalizer::fit(&observed)?;
    let front = staircase(&normalizer.transform_all(&ctx.archive().front_points()));
    let gp = GpModel::fit(&x, &y, gp_settings, rng)?;

    let mut candidates: Vec<SubNetConfig> = Vec::with_capacity(settings.candidates_per_iter);
    for _ in 0..settings.candidates_per_iter * 10 {
        if candidates.len() == settings.candidates_per_iter {
            break;
        }
        let c = space.canonicalize(&space.sample_uniform(rng));
        if !ctx.is_seen(&c) && !candidates.contains(&c) {
            candidates.push(c);
        }
    }
    let eps: Vec<[f64; 2]> = (0..settings.mc_samples)
        .map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)])
        .collect();
    let mut best: Option<(f64, SubNetConfig)> = None;
    for c in candidates {
        let (mean, sd) = gp.predict(&space.encode_unit(&c));
        let a = expected_hvi_mc(&front, [mean[0], mean[1]], [sd[0], sd[1]], &eps, r, |o| normalizer.transform(&o));
        if best.as_ref().map_or(true, |(b, _)| a > *b) {
            best = Some((a, c));
        }
    }
    Ok(best.map(|(_, c)| c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::hypervolume;

    fn ov(a: f64, b: f64) -> ObjectiveVector {
        ObjectiveVector::new(a, b)
    }

    #[test]
    fn single_point_improvement_matches_difference() {
        let pts = vec![ov(0.5, 1.5), ov(1.0, 1.0), ov(1.5, 0.5)];
        let r = RefPoint::default();
        let base = hypervolume(&pts, r).unwrap();
        let front = staircase(&pts);
        for y in [ov(0.2, 0.2), ov(0.7, 1.2), ov(1.2, 1.2), ov(1.9, 0.1), ov(0.0, 1.99), ov(2.5, 0.0)] {
            let mut with = pts.clone();
            let expected = if y.f0 <= 2.0 && y.f1 <= 2.0 {
                with.push(y);
                hypervolume(&with, r).unwrap() - base
            } else {
                0.0
            };
            assert!((hvi_single(&front, &y, r) - expected).abs() < 1e-12, "{y:?}");
        }
        assert_eq!(hvi_single(&[], &ov(0.0, 0.0), r), 4.0);
    }
}
