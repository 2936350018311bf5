//! Dominance, non-dominated sorting, quantile normalisation, hypervolume and
//! average ranks. Both objectives are minimised.

mod archive;
mod hypervolume;
mod normalize;
mod ranks;

pub use archive::{ArchiveEntry, ParetoArchive};
pub use hypervolume::{hypervolume, hypervolume_contributions, hypervolume_regret, RefPoint};
pub use normalize::{ObjectiveNormalizer, QuantileNormalizer};
pub use ranks::{average_ranks, interpolate_locf, mid_ranks_descending};

use serde::{Deserialize, Serialize};

/// `(validation error, parameter count)`, raw or normalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub f0: f64,
    pub f1: f64,
}

impl ObjectiveVector {
    pub const fn new(f0: f64, f1: f64) -> Self {
        ObjectiveVector { f0, f1 }
    }

    pub fn is_finite(&self) -> bool {
        self.f0.is_finite() && self.f1.is_finite()
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.f0, self.f1]
    }
}

/// `a ≻ b`: no worse in both objectives and strictly better in one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.f0 <= b.f0 && a.f1 <= b.f1 && (a.f0 < b.f0 || a.f1 < b.f1)
}

/// Fast non-dominated sort. Returns fronts of indices into `points`; front 0
/// is the Pareto front. Indices inside a front are ascending.
pub fn nondominated_sort(points: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Rank of every point (0 = non-dominated).
pub fn nondomination_ranks(points: &[ObjectiveVector]) -> Vec<usize> {
    let mut ranks = vec![0; points.len()];
    for (r, front) in nondominated_sort(points).iter().enumerate() {
        for &i in front {
            ranks[i] = r;
        }
    }
    ranks
}

/// Indices of the non-dominated points.
pub fn pareto_front_indices(points: &[ObjectiveVector]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}
