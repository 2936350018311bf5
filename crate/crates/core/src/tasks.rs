//! Deterministic synthetic sequence-classification tasks.
//!
//! - `majority`: the label is the most frequent token class, where a token's
//!   class is `token mod C` (its parity when `C = 2`). Sequences with a tied
//!   count are never generated.
//! - `match`: label 1 iff the first and last tokens are equal.
//! - `pattern`: label 1 iff the trigram `(1, 2, 3) mod V` occurs anywhere.
//!
//! Each split holds the classes in equal proportion (up to one example) and
//! the labelled pool is split 70/30 into training and validation data.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::{Batch, ModelDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Majority,
    Match,
    Pattern,
}

impl TaskName {
    pub const ALL: [TaskName; 3] = [TaskName::Majority, TaskName::Match, TaskName::Pattern];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::Majority => "majority",
            TaskName::Match => "match",
            TaskName::Pattern => "pattern",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task {s:?}")))
    }
}

/// Everything needed to regenerate a dataset byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub name: TaskName,
    pub vocab: usize,
    pub seq_len: usize,
    pub classes: usize,
    /// Size of the labelled pool that is split into training and validation.
    pub labeled: usize,
    pub test: usize,
    pub seed: u64,
}

impl SyntheticTask {
    /// A task shaped for `dims` with 700 training, 300 validation and 300
    /// test examples.
    pub fn for_dims(name: TaskName, dims: &ModelDims, seed: u64) -> Self {
        SyntheticTask {
            name,
            vocab: dims.vocab,
            seq_len: dims.max_len,
            classes: dims.classes,
            labeled: 1000,
            test: 300,
            seed,
        }
    }

    pub fn train_size(&self) -> usize {
        (self.labeled as f64 * 0.7).round() as usize
    }

    pub fn valid_size(&self) -> usize {
        self.labeled - self.train_size()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(format!("task needs at least 2 classes, got {}", self.classes)));
        }
        if self.vocab < self.classes {
            return Err(Error::InvalidConfig(format!(
                "vocabulary size {} is smaller than the class count {}",
                self.vocab, self.classes
            )));
        }
        if self.seq_len < 3 {
            return Err(Error::InvalidConfig(format!("sequence length {} is below 3", self.seq_len)));
        }
        if self.name != TaskName::Majority && self.classes != 2 {
            return Err(Error::InvalidConfig(format!("task {} is binary, got {} classes", self.name, self.classes)));
        }
        if self.name == TaskName::Pattern && self.vocab < 2 {
            return Err(Error::InvalidConfig("pattern task needs at least 2 tokens".into()));
        }
        if self.train_size() == 0 || self.valid_size() == 0 {
            return Err(Error::InvalidConfig(format!("labelled pool of {} is too small to split", self.labeled)));
        }
        Ok(())
    }

    /// Ground-truth label of a token sequence; `None` for a tied majority.
    pub fn label(&self, tokens: &[usize]) -> Option<usize> {
        match self.name {
            TaskName::Majority => {
                let mut counts = vec![0usize; self.classes];
                for &t in tokens {
                    counts[t % self.classes] += 1;
                }
                let best = *counts.iter().max()?;
                let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == best);
                let (label, _) = winners.next()?;
                winners.next().is_none().then_some(label)
            }
            TaskName::Match => Some(usize::from(tokens.first() == tokens.last())),
            TaskName::Pattern => {
                let tri = self.trigram();
                Some(usize::from(tokens.windows(3).any(|w| w == tri)))
            }
        }
    }

    fn trigram(&self) -> [usize; 3] {
        [1 % self.vocab, 2 % self.vocab, 3 % self.vocab]
    }

    fn sample_with_label(&self, label: usize, rng: &mut impl Rng) -> Vec<usize> {
        let (v, n) = (self.vocab, self.seq_len);
        let random = |rng: &mut dyn rand::RngCore| (0..n).map(|_| rng.gen_range(0..v)).collect::<Vec<_>>();
        match (self.name, label) {
            (TaskName::Match, 1) => {
                let mut s = random(rng);
                s[n - 1] = s[0];
                s
            }
            (TaskName::Match, _) => {
                let mut s = random(rng);
                // uniform over tokens other than the first
                let other = rng.gen_range(0..v - 1);
                s[n - 1] = if other >= s[0] { other + 1 } else { other };
                s
            }
            (TaskName::Pattern, 1) => {
                let mut s = random(rng);
                let at = rng.gen_range(0..=n - 3);
                s[at..at + 3].copy_from_slice(&self.trigram());
                s
            }
            _ => loop {
                let s = random(rng);
                if self.label(&s) == Some(label) {
                    return s;
                }
            },
        }
    }

    fn generate_split(&self, size: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
        let mut out: Vec<Example> = (0..size)
            .map(|i| {
                let label = i % self.classes;
                Example {
                    tokens: self.sample_with_label(label, rng),
                    label,
                }
            })
            .collect();
        out.shuffle(rng);
        out
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_train = self.train_size();
        let mut pool = self.generate_split(self.labeled, &mut rng);
        let test = self.generate_split(self.test, &mut rng);
        let valid = pool.split_off(n_train);
        Ok(Dataset {
            task: self.clone(),
            train: pool,
            valid,
            test,
        })
    }
}

/// A labelled token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: SyntheticTask,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn to_batch(&self, examples: &[Example]) -> Batch {
        let tokens = examples.iter().flat_map(|e| e.tokens.iter().copied()).collect();
        let labels = examples.iter().map(|e| e.label).collect();
        Batch::new(self.task.seq_len, tokens, labels)
    }

    /// One epoch of shuffled training batches; the last one may be short.
    pub fn train_batches(&self, batch_size: usize, rng: &mut impl Rng) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(rng);
        order
            .chunks(batch_size.max(1))
            .map(|idx| {
                let ex: Vec<Example> = idx.iter().map(|&i| self.train[i].clone()).collect();
                self.to_batch(&ex)
            })
            .collect()
    }

    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.train.len().div_ceil(batch_size.max(1))
    }

    pub fn valid_batch(&self) -> Batch {
        self.to_batch(&self.valid)
    }

    pub fn test_batch(&self) -> Batch {
        self.to_batch(&self.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(name: TaskName) -> SyntheticTask {
        SyntheticTask::for_dims(name, &ModelDims::toy(), 7)
    }

    #[test]
    fn labels_agree_with_definition() {
        for name in TaskName::ALL {
            let t = task(name);
            let d = t.generate().unwrap();
            for e in d.train.iter().chain(&d.valid).chain(&d.test) {
                assert_eq!(t.label(&e.tokens), Some(e.label));
                assert_eq!(e.tokens.len(), t.seq_len);
                assert!(e.tokens.iter().all(|&x| x < t.vocab));
            }
        }
    }

    #[test]
    fn seventy_thirty_split() {
        let d = task(TaskName::Majority).generate().unwrap();
        assert_eq!((d.train.len(), d.valid.len(), d.test.len()), (700, 300, 300));
    }

    #[test]
    fn identical_tokens_match() {
        assert_eq!(task(TaskName::Match).label(&[5; 16]), Some(1));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut t = task(TaskName::Majority);
        t.vocab = 1;
        assert!(t.generate().is_err());
        let mut t = task(TaskName::Match);
        t.seq_len = 2;
        assert!(t.generate().is_err());
        let mut t = task(TaskName::Pattern);
        t.classes = 3;
        assert!(t.generate().is_err());
    }
}
