use serde::{Deserialize, Serialize};

use super::{dominates, ObjectiveVector};
use crate::space::SubNetConfig;

/// One evaluation as seen by the archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub config: SubNetConfig,
    pub objectives: ObjectiveVector,
    /// Cumulative search time at which the result became available.
    pub wallclock_s: f64,
    pub seed: u64,
    /// Training epochs behind the result; `None` for shared-weight evaluation.
    pub fidelity_epochs: Option<usize>,
}

/// Evaluation history plus the indices of its non-dominated entries.
///
/// An entry can be superseded by a later entry for the same config (a higher
/// rung in successive halving); superseded entries stay in the history but
/// take no part in the front.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    history: Vec<ArchiveEntry>,
    superseded: Vec<bool>,
    front: Vec<usize>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history(&self) -> &[ArchiveEntry] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Indices into the history, ascending.
    pub fn front(&self) -> &[usize] {
        &self.front
    }

    pub fn front_entries(&self) -> impl Iterator<Item = &ArchiveEntry> + '_ {
        self.front.iter().map(move |&i| &self.history[i])
    }

    pub fn front_points(&self) -> Vec<ObjectiveVector> {
        self.front_entries().map(|e| e.objectives).collect()
    }

    pub fn is_superseded(&self, index: usize) -> bool {
        self.superseded[index]
    }

    /// Appends an entry and updates the front incrementally. Returns its index.
    pub fn insert(&mut self, entry: ArchiveEntry) -> usize {
        let idx = self.history.len();
        let y = entry.objectives;
        self.history.push(entry);
        self.superseded.push(false);
        if self.front.iter().any(|&i| dominates(&self.history[i].objectives, &y)) {
            return idx;
        }
        let history = &self.history;
        self.front.retain(|&i| !dominates(&y, &history[i].objectives));
        self.front.push(idx);
        idx
    }

    /// Appends an entry that replaces every earlier entry with the same config.
    pub fn insert_replacing(&mut self, entry: ArchiveEntry) -> usize {
        let mut changed = false;
        for (i, e) in self.history.iter().enumerate() {
            if !self.superseded[i] && e.config == entry.config {
                self.superseded[i] = true;
                changed = true;
            }
        }
        if !changed {
            return self.insert(entry);
        }
        self.history.push(entry);
        self.superseded.push(false);
        self.rebuild_front();
        self.history.len() - 1
    }

    fn rebuild_front(&mut self) {
        let live: Vec<usize> = (0..self.history.len()).filter(|&i| !self.superseded[i]).collect();
        self.front = live
            .iter()
            .copied()
            .filter(|&i| {
                !live
                    .iter()
                    .any(|&j| dominates(&self.history[j].objectives, &self.history[i].objectives))
            })
            .collect();
    }

    /// Whether any live entry already holds this config.
    pub fn contains_config(&self, config: &SubNetConfig) -> bool {
        self.history
            .iter()
            .zip(&self.superseded)
            .any(|(e, &s)| !s && &e.config == config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceKind;

    fn entry(values: Vec<usize>, f0: f64, f1: f64) -> ArchiveEntry {
        ArchiveEntry {
            config: SubNetConfig { space: SpaceKind::Layer, values },
            objectives: ObjectiveVector::new(f0, f1),
            wallclock_s: 0.0,
            seed: 0,
            fidelity_epochs: None,
        }
    }

    #[test]
    fn incremental_front() {
        let mut a = ParetoArchive::new();
        a.insert(entry(vec![0], 0.5, 10.0));
        a.insert(entry(vec![1], 0.6, 5.0));
        assert_eq!(a.front(), &[0, 1]);
        a.insert(entry(vec![2], 0.4, 4.0));
        assert_eq!(a.front(), &[2]);
        a.insert(entry(vec![3], 0.9, 9.0));
        assert_eq!(a.front(), &[2]);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn replacement_drops_stale_result() {
        let mut a = ParetoArchive::new();
        a.insert(entry(vec![0], 0.1, 10.0));
        a.insert(entry(vec![1], 0.5, 12.0));
        assert_eq!(a.front(), &[0]);
        a.insert_replacing(entry(vec![0], 0.7, 10.0));
        assert!(a.is_superseded(0));
        assert_eq!(a.front(), &[1, 2]);
    }
}
