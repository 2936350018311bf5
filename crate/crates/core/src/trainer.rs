//! Super-network training strategies, shared-weight evaluation and standalone
//! fine-tuning of single sub-networks.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::ObjectiveVector;
use crate::space::{SearchSpace, SubNetConfig};
use crate::tasks::Dataset;
use crate::transformer::{
    accumulate_loss_and_grads, forward_masked, Adam, AdamState, Batch, MaskPair, Matrix, ModelDims, SuperNetwork, Teacher, Weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    /// Full network, cross-entropy only.
    Standard,
    /// One uniformly sampled sub-network per step.
    Random,
    /// A sampled sub-network with probability `p`, else the full network;
    /// `p` rises linearly from 0 to 1 over all steps.
    RandomLinear,
    /// Largest, smallest and `k` sampled sub-networks, cross-entropy.
    Sandwich,
    /// `k` sampled sub-networks distilled from the current full network.
    Kd,
    /// Sandwich rule where everything but the largest network is distilled
    /// from the largest network's logits of the same step.
    Full,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Standard,
        StrategyKind::Random,
        StrategyKind::RandomLinear,
        StrategyKind::Sandwich,
        StrategyKind::Kd,
        StrategyKind::Full,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Standard => "STANDARD",
            StrategyKind::Random => "RANDOM",
            StrategyKind::RandomLinear => "RANDOM_LINEAR",
            StrategyKind::Sandwich => "SANDWICH",
            StrategyKind::Kd => "KD",
            StrategyKind::Full => "FULL",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown training strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStrategy {
    pub kind: StrategyKind,
    /// Sampled sub-networks per step.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Distillation temperature.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_k() -> usize {
    2
}

fn default_temperature() -> f64 {
    10.0
}

impl TrainStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        TrainStrategy {
            kind,
            k: default_k(),
            temperature: default_temperature(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("strategy needs k >= 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: Adam,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            adam: Adam::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// One sub-network taking part in an optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSubnet {
    pub config: SubNetConfig,
    pub mask: MaskPair,
    /// Distil from the full network instead of using cross-entropy.
    pub distill: bool,
    /// Drawn at random rather than fixed by the strategy.
    pub sampled: bool,
}

/// The sub-networks of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub members: Vec<PlannedSubnet>,
}

impl StepPlan {
    /// Draws the sub-networks for step `step` of `total_steps`.
    pub fn draw(strategy: &TrainStrategy, space: &SearchSpace, step: usize, total_steps: usize, rng: &mut impl Rng) -> Result<StepPlan> {
        let member = |cfg: SubNetConfig, distill: bool, sampled: bool| -> Result<PlannedSubnet> {
            Ok(PlannedSubnet {
                mask: space.create_mask(&cfg)?,
                config: cfg,
                distill,
                sampled,
            })
        };
        let max = || space.max_config();
        let mut members = Vec::new();
        match strategy.kind {
            StrategyKind::Standard => members.push(member(max(), false, false)?),
            StrategyKind::Random => members.push(member(space.sample_uniform(rng), false, true)?),
            StrategyKind::RandomLinear => {
                let p = if total_steps > 1 {
                    step as f64 / (total_steps - 1) as f64
                } else {
                    0.0
                };
                if rng.gen::<f64>() < p {
                    members.push(member(space.sample_uniform(rng), false, true)?);
                } else {
                    members.push(member(max(), false, false)?);
                }
            }
            StrategyKind::Sandwich | StrategyKind::Full => {
                let distill = strategy.kind == StrategyKind::Full;
                members.push(member(max(), false, false)?);
                members.push(member(space.min_config(), distill, false)?);
                for _ in 0..strategy.k {
                    members.push(member(space.sample_uniform(rng), distill, true)?);
                }
            }
            StrategyKind::Kd => {
                for _ in 0..strategy.k {
                    members.push(member(space.sample_uniform(rng), true, true)?);
                }
            }
        }
        Ok(StepPlan { members })
    }
}

/// Instrumentation of one optimizer step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Sum of the member losses.
    pub loss: f64,
    /// Masked forward/backward passes.
    pub passes: usize,
    /// Gradient-free forward passes that only produced teacher logits.
    pub teacher_forwards: usize,
    pub sampled_subnets: usize,
}

/// Sums the gradients of every member of `plan` on `batch`.
///
/// Teacher logits come from the full network at the current weights and are
/// constants: no gradient flows back through them. When the plan already
/// contains the full network under cross-entropy its logits are reused.
pub fn accumulate_step(net: &SuperNetwork, plan: &StepPlan, batch: &Batch, temperature: f64, grads: &mut Weights) -> Result<StepStats> {
    let mut stats = StepStats::default();
    let full = MaskPair::ones(&net.dims);
    let needs_teacher = plan.members.iter().any(|m| m.distill);
    let mut teacher: Option<Matrix> = None;

    // cross-entropy members first so the full network's logits are available
    let order = plan
        .members
        .iter()
        .filter(|m| !m.distill)
        .chain(plan.members.iter().filter(|m| m.distill));
    for m in order {
        if m.distill && teacher.is_none() {
            teacher = Some(forward_masked(net, &full, batch)?);
            stats.teacher_forwards += 1;
        }
        let t = if m.distill {
            teacher.as_ref().map(|logits| Teacher { logits, temperature })
        } else {
            None
        };
        let out = accumulate_loss_and_grads(net, &m.mask, batch, t, grads)?;
        if needs_teacher && !m.distill && teacher.is_none() && m.mask == full {
            teacher = Some(out.logits);
        }
        stats.loss += out.loss;
        stats.passes += 1;
        stats.sampled_subnets += usize::from(m.sampled);
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub strategy: TrainStrategy,
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    /// Summed member loss of every optimizer step.
    pub losses: Vec<f64>,
    /// Masked forward/backward passes over the whole run.
    pub passes: usize,
    pub teacher_forwards: usize,
    /// Steps that updated at least one sampled sub-network.
    pub sampled_steps: usize,
    /// Host time spent training; informational only.
    pub wallclock_s: f64,
    /// Where the trained weights were written, if anywhere.
    pub checkpoint: Option<String>,
}

/// Trains the shared weights of `net` in place.
pub fn train_supernet(
    net: &mut SuperNetwork,
    data: &Dataset,
    space: &SearchSpace,
    strategy: &TrainStrategy,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    strategy.validate()?;
    cfg.validate()?;
    if space.dims != net.dims {
        return Err(Error::InvalidConfig("search space and network have different dims".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_steps = cfg.epochs * data.steps_per_epoch(cfg.batch_size);
    let mut state = AdamState::new(&net.dims);
    let mut grads = Weights::zeros(&net.dims);
    let mut report = TrainReport {
        strategy: *strategy,
        seed,
        epochs: cfg.epochs,
        steps: 0,
        losses: Vec::with_capacity(total_steps),
        passes: 0,
        teacher_forwards: 0,
        sampled_steps: 0,
        wallclock_s: 0.0,
        checkpoint: None,
    };
    for epoch in 0..cfg.epochs {
        for batch in data.train_batches(cfg.batch_size, &mut rng) {
            let step = report.steps;
            let plan = StepPlan::draw(strategy, space, step, total_steps, &mut rng)?;
            grads.fill_zero();
            let stats = accumulate_step(net, &plan, &batch, strategy.temperature, &mut grads)
                .and_then(|s| cfg.adam.step(net, &grads, &mut state).map(|_| s))
                .map_err(|e| at_step(e, step))?;
            if !stats.loss.is_finite() {
                return Err(at_step(Error::Numeric { context: "non-finite loss".into() }, step));
            }
            report.losses.push(stats.loss);
            report.passes += stats.passes;
            report.teacher_forwards += stats.teacher_forwards;
            report.sampled_steps += usize::from(stats.sampled_subnets > 0);
            report.steps += 1;
        }
        log::debug!("{} epoch {} done, last loss {:?}", strategy.kind, epoch + 1, report.losses.last());
    }
    report.wallclock_s = started.elapsed().as_secs_f64();
    Ok(report)
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Numeric { context } => Error::Numeric {
            context: format!("training step {step}: {context}"),
        },
        other => other,
    }
}

/// Misclassification rate of `mask` on `batch`.
pub fn error_rate(net: &SuperNetwork, mask: &MaskPair, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty batch".into()));
    }
    let logits = forward_masked(net, mask, batch)?;
    let wrong = logits
        .argmax_rows()
        .iter()
        .zip(&batch.labels)
        .filter(|(p, y)| p != y)
        .count();
    Ok(wrong as f64 / batch.len() as f64)
}

/// Validation error and parameter count of `cfg` with the shared weights.
pub fn evaluate_subnet(net: &SuperNetwork, space: &SearchSpace, cfg: &SubNetConfig, data: &Dataset) -> Result<ObjectiveVector> {
    let mask = space.create_mask(cfg)?;
    let f0 = error_rate(net, &mask, &data.valid_batch())?;
    let f1 = space.param_count(cfg)?.0 as f64;
    Ok(ObjectiveVector::new(f0, f1))
}

/// A sub-network fine-tuned on its own copy of the pre-trained weights, which
/// can be trained further in increments (successive-halving rungs).
#[derive(Debug, Clone)]
pub struct StandaloneRun {
    config: SubNetConfig,
    mask: MaskPair,
    net: SuperNetwork,
    state: AdamState,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl StandaloneRun {
    pub fn new(pretrained: &SuperNetwork, space: &SearchSpace, cfg: &SubNetConfig, seed: u64) -> Result<Self> {
        Ok(StandaloneRun {
            mask: space.create_mask(cfg)?,
            config: cfg.clone(),
            net: pretrained.clone(),
            state: AdamState::new(&pretrained.dims),
            rng: ChaCha8Rng::seed_from_u64(seed),
            epochs_done: 0,
        })
    }

    pub fn config(&self) -> &SubNetConfig {
        &self.config
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn network(&self) -> &SuperNetwork {
        &self.net
    }

    /// Continues cross-entropy training under the mask until `epochs` total.
    pub fn train_to(&mut self, epochs: usize, data: &Dataset, cfg: &TrainConfig) -> Result<()> {
        cfg.validate()?;
        let mut grads = Weights::zeros(&self.net.dims);
        let mut step = self.state.step as usize;
        while self.epochs_done < epochs {
            for batch in data.train_batches(cfg.batch_size, &mut self.rng) {
                grads.fill_zero();
                accumulate_loss_and_grads(&self.net, &self.mask, &batch, None, &mut grads)
                    .and_then(|_| cfg.adam.step(&mut self.net, &grads, &mut self.state))
                    .map_err(|e| at_step(e, step))?;
                step += 1;
            }
            self.epochs_done += 1;
        }
        Ok(())
    }

    pub fn evaluate(&self, space: &SearchSpace, data: &Dataset) -> Result<ObjectiveVector> {
        evaluate_subnet(&self.net, space, &self.config, data)
    }
}

/// Fine-tunes a clone of `pretrained` under the mask of `cfg` for `epochs`
/// and returns its validation objectives. `pretrained` is left untouched.
pub fn finetune_subnet_standalone(
    pretrained: &SuperNetwork,
    space: &SearchSpace,
    cfg: &SubNetConfig,
    data: &Dataset,
    epochs: usize,
    train: &TrainConfig,
    seed: u64,
) -> Result<ObjectiveVector> {
    let mut run = StandaloneRun::new(pretrained, space, cfg, seed)?;
    run.train_to(epochs, data, train)?;
    run.evaluate(space, data)
}

/// Approximate floating-point operations of one forward pass of one sequence
/// of length `n` under `mask`. Drives the simulated clock.
pub fn forward_flops(dims: &ModelDims, mask: &MaskPair, n: usize) -> f64 {
    let (n, d, dh) = (n as f64, dims.d_model as f64, dims.d_head as f64);
    let per_head = 2.0 * (4.0 * n * d * dh + 2.0 * n * n * dh);
    let per_neuron = 2.0 * 2.0 * n * d;
    let per_layer = 2.0 * 8.0 * n * d;
    let fixed = dims.layers as f64 * per_layer + 2.0 * d * dims.classes as f64 + n * d;
    fixed + mask.active_heads() as f64 * per_head + mask.active_neurons() as f64 * per_neuron
}
