use serde::{Deserialize, Serialize};

use super::{ObjectiveNormalizer, ObjectiveVector, ParetoArchive};
use crate::error::{Error, Result};

/// Reference point bounding the dominated region from above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefPoint(pub [f64; 2]);

impl Default for RefPoint {
    /// `(2, 2)` in quantile-normalised space; the largest attainable volume is 4.
    fn default() -> Self {
        RefPoint([2.0, 2.0])
    }
}

/// Exact two-objective hypervolume of the union of boxes `[y, r]`.
///
/// Points are swept in ascending `f0`; dominated and duplicate points add
/// nothing. A point outside the reference box is an error.
pub fn hypervolume(points: &[ObjectiveVector], r: RefPoint) -> Result<f64> {
    let [r0, r1] = r.0;
    for p in points {
        if !(p.f0 <= r0 && p.f1 <= r1) {
            return Err(Error::OutsideReference {
                point: p.as_array(),
                reference: r.0,
            });
        }
    }
    let mut sorted: Vec<&ObjectiveVector> = points.iter().collect();
    sorted.sort_by(|a, b| a.f0.total_cmp(&b.f0).then(a.f1.total_cmp(&b.f1)));
    let mut hv = 0.0;
    let mut level = r1;
    for p in sorted {
        if p.f1 < level {
            hv += (r0 - p.f0) * (level - p.f1);
            level = p.f1;
        }
    }
    Ok(hv)
}

/// Exclusive contribution of each point: `HV(all) − HV(all without it)`.
pub fn hypervolume_contributions(points: &[ObjectiveVector], r: RefPoint) -> Result<Vec<f64>> {
    let total = hypervolume(points, r)?;
    let mut rest = Vec::with_capacity(points.len().saturating_sub(1));
    (0..points.len())
        .map(|i| {
            rest.clear();
            rest.extend(points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p));
            Ok((total - hypervolume(&rest, r)?).max(0.0))
        })
        .collect()
}

/// `best − HV(normalised archive front)`.
///
/// A result below `-1e-9` means the reference volume was not an upper bound
/// (usually a normalisation mismatch) and is reported as an error; smaller
/// negative round-off is returned as zero.
pub fn hypervolume_regret(archive: &ParetoArchive, normalizer: &ObjectiveNormalizer, r: RefPoint, best_possible_hv: f64) -> Result<f64> {
    let front = normalizer.transform_all(&archive.front_points());
    let regret = best_possible_hv - hypervolume(&front, r)?;
    if regret < -1e-9 {
        return Err(Error::NegativeRegret(regret));
    }
    Ok(regret.max(0.0))
}
