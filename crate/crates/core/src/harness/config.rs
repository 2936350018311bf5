use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{AshaSettings, EhviSettings, ReaSettings};
use crate::space::SpaceKind;
use crate::tasks::{SyntheticTask, TaskName};
use crate::trainer::{StrategyKind, TrainConfig, TrainStrategy};
use crate::transformer::ModelDims;

/// Search algorithm behind a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Searcher {
    Random,
    Local,
    Evolution,
    Ehvi,
    Asha,
}

/// A method as named in configs and result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Search with shared super-network weights.
    WeightSharing(Searcher),
    /// Search with standalone fine-tuning of every candidate.
    Standalone(Searcher),
    /// Drop the top layers and fine-tune.
    LayerDrop,
}

impl Method {
    pub fn needs_supernet(&self) -> bool {
        matches!(self, Method::WeightSharing(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let searcher = |s: &Searcher| match s {
            Searcher::Random => "rs",
            Searcher::Local => "ls",
            Searcher::Evolution => "morea",
            Searcher::Ehvi => "ehvi",
            Searcher::Asha => "moasha",
        };
        match self {
            Method::WeightSharing(s) => write!(f, "ws-{}", searcher(s)),
            Method::Standalone(s) => write!(f, "s-{}", searcher(s)),
            Method::LayerDrop => f.write_str("ld"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let searcher = |name: &str| match name {
            "rs" => Some(Searcher::Random),
            "ls" => Some(Searcher::Local),
            "morea" => Some(Searcher::Evolution),
            "ehvi" => Some(Searcher::Ehvi),
            "moasha" => Some(Searcher::Asha),
            _ => None,
        };
        let method = if s == "ld" {
            Some(Method::LayerDrop)
        } else if let Some(rest) = s.strip_prefix("ws-") {
            searcher(rest).filter(|s| *s != Searcher::Asha).map(Method::WeightSharing)
        } else if let Some(rest) = s.strip_prefix("s-") {
            searcher(rest).map(Method::Standalone)
        } else {
            None
        };
        method.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown method {s:?} (expected ws-{{rs,ls,morea,ehvi}}, s-{{rs,ls,morea,ehvi,moasha}} or ld)"
            ))
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Labelled pool, split 70/30 into training and validation.
    pub labeled: usize,
    pub test: usize,
    /// Generation seed, shared by every run seed.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            labeled: 1000,
            test: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Simulated seconds per (method, seed) for shared-weight search.
    pub ws_seconds: f64,
    /// Simulated seconds per (method, seed) for standalone search.
    pub standalone_seconds: f64,
    /// Optional cap on evaluations per (method, seed).
    pub max_evaluations: Option<usize>,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            ws_seconds: 60.0,
            standalone_seconds: 300.0,
            max_evaluations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearcherSettings {
    pub rea: ReaSettings,
    pub ehvi: EhviSettings,
    pub asha: AshaSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Points of the shared time grid used for ranks and regret curves.
    pub grid_points: usize,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            grid_points: 50,
            bootstrap_samples: 1000,
            seed: 0,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_strategy() -> TrainStrategy {
    TrainStrategy::new(StrategyKind::Full)
}

/// A complete experiment; see the README for the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskName,
    #[serde(default)]
    pub data: DataConfig,
    pub space: SpaceKind,
    #[serde(default)]
    pub model: ModelDims,
    pub methods: Vec<Method>,
    #[serde(default = "default_strategy")]
    pub strategy: TrainStrategy,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub searchers: SearcherSettings,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::MissingInput(format!("config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn task_spec(&self) -> SyntheticTask {
        SyntheticTask {
            name: self.task,
            vocab: self.model.vocab,
            seq_len: self.model.max_len,
            classes: self.model.classes,
            labeled: self.data.labeled,
            test: self.data.test,
            seed: self.data.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task_spec().validate()?;
        self.strategy.validate()?;
        self.training.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods given".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::InvalidConfig(format!("method {m} listed twice")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds given".into()));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(Error::InvalidConfig(format!("seed {s} listed twice")));
            }
        }
        if self.methods.contains(&Method::LayerDrop) && self.model.layers < 2 {
            return Err(Error::InvalidConfig("layer dropping needs at least 2 layers".into()));
        }
        if self.methods.contains(&Method::Standalone(Searcher::Asha)) {
            self.searchers.asha.schedule.validate()?;
        }
        if !(self.budgets.ws_seconds > 0.0 && self.budgets.standalone_seconds > 0.0) {
            return Err(Error::InvalidConfig("budgets must be positive".into()));
        }
        if self.metrics.grid_points < 2 || self.metrics.bootstrap_samples == 0 {
            return Err(Error::InvalidConfig("metrics need >= 2 grid points and >= 1 bootstrap sample".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        Ok(())
    }
}
