//! A small encoder-only transformer whose attention heads and FFN neurons can
//! be switched off individually by binary masks.
//!
//! Every layer computes
//!
//! ```text
//! X_mha = LN(X + Σ_i m_head[l,i] · Att_i(X))
//! X_out = LN(X_mha + W_1 (m_neuron[l,:] ∘ gelu(W_0 X_mha + b_0)))
//! ```
//!
//! The neuron mask multiplies the `U`-dimensional intermediate activation
//! element-wise, which is the same as zeroing the matching columns of `W_1`
//! (and makes the neuron's `W_0` row and bias irrelevant). The classification
//! head mean-pools the last layer and applies a linear map.

mod adam;
mod checkpoint;
mod model;

pub use adam::{Adam, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{forward_masked, loss_and_grads, LossBreakdown, Teacher};

pub use model::accumulate_loss_and_grads;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural sizes of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDims {
    pub layers: usize,
    pub heads: usize,
    pub units: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub classes: usize,
}

impl ModelDims {
    /// CPU-sized default: L=4, H=4, U=64, d_model=32, d_head=8, V=32, n=16, C=2.
    pub const fn toy() -> Self {
        ModelDims {
            layers: 4,
            heads: 4,
            units: 64,
            d_model: 32,
            d_head: 8,
            vocab: 32,
            max_len: 16,
            classes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("units", self.units),
            ("d_model", self.d_model),
            ("d_head", self.d_head),
            ("vocab", self.vocab),
            ("max_len", self.max_len),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidDims(format!("{name} must be at least 1")));
        }
        if self.heads * self.d_head != self.d_model {
            return Err(Error::InvalidDims(format!(
                "heads ({}) × d_head ({}) must equal d_model ({})",
                self.heads, self.d_head, self.d_model
            )));
        }
        Ok(())
    }

    /// Parameters owned by one attention head (Q, K, V and O slices).
    pub fn params_per_head(&self) -> u64 {
        4 * (self.d_model * self.d_head) as u64
    }

    /// Parameters owned by one FFN neuron (W_0 row, W_1 column, bias).
    pub fn params_per_neuron(&self) -> u64 {
        2 * self.d_model as u64 + 1
    }

    /// Parameters that are never pruned: embeddings, layer norms and classifier.
    pub fn fixed_params(&self) -> u64 {
        let d = self.d_model as u64;
        let emb = (self.vocab as u64 + self.max_len as u64) * d;
        let norms = self.layers as u64 * 4 * d;
        let cls = d * self.classes as u64 + self.classes as u64;
        emb + norms + cls
    }
}

impl Default for ModelDims {
    fn default() -> Self {
        Self::toy()
    }
}

/// Weights of one encoder layer.
///
/// Layouts (row-major): `wq`, `wk`, `wv` are `[H, d_model, d_head]`; `wo` is
/// `[H, d_head, d_model]`; `w0` is `[U, d_model]`; `w1` is `[d_model, U]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub w0: Vec<f64>,
    pub b0: Vec<f64>,
    pub w1: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// `[V, d_model]`
    pub tok_emb: Vec<f64>,
    /// `[max_len, d_model]`
    pub pos_emb: Vec<f64>,
    pub layers: Vec<LayerWeights>,
    /// `[d_model, C]`
    pub cls_w: Vec<f64>,
    pub cls_b: Vec<f64>,
}

const LAYER_TENSORS: [&str; 11] = [
    "wq", "wk", "wv", "wo", "ln1_gamma", "ln1_beta", "w0", "b0", "w1", "ln2_gamma", "ln2_beta",
];

impl LayerWeights {
    fn shapes(dims: &ModelDims) -> [Vec<usize>; 11] {
        let (h, d, dh, u) = (dims.heads, dims.d_model, dims.d_head, dims.units);
        [
            vec![h, d, dh],
            vec![h, d, dh],
            vec![h, d, dh],
            vec![h, dh, d],
            vec![d],
            vec![d],
            vec![u, d],
            vec![u],
            vec![d, u],
            vec![d],
            vec![d],
        ]
    }

    fn tensors(&self) -> [&Vec<f64>; 11] {
        [
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.w0,
            &self.b0,
            &self.w1,
            &self.ln2_gamma,
            &self.ln2_beta,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 11] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.w0,
            &mut self.b0,
            &mut self.w1,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
        ]
    }
}

impl Weights {
    pub fn zeros(dims: &ModelDims) -> Self {
        let shapes = Self::named_shapes(dims);
        let mut it = shapes.into_iter().map(|(_, s)| vec![0.0; s.iter().product()]);
        let mut next = || it.next().expect("shape list matches layout");
        let tok_emb = next();
        let pos_emb = next();
        let layers = (0..dims.layers)
            .map(|_| LayerWeights {
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                ln1_gamma: next(),
                ln1_beta: next(),
                w0: next(),
                b0: next(),
                w1: next(),
                ln2_gamma: next(),
                ln2_beta: next(),
            })
            .collect();
        let cls_w = next();
        let cls_b = next();
        Weights {
            tok_emb,
            pos_emb,
            layers,
            cls_w,
            cls_b,
        }
    }

    /// Tensor names and shapes in canonical (checkpoint) order.
    pub fn named_shapes(dims: &ModelDims) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("tok_emb".to_string(), vec![dims.vocab, dims.d_model]),
            ("pos_emb".to_string(), vec![dims.max_len, dims.d_model]),
        ];
        for l in 0..dims.layers {
            for (name, shape) in LAYER_TENSORS.iter().zip(LayerWeights::shapes(dims)) {
                out.push((format!("layers.{l}.{name}"), shape));
            }
        }
        out.push(("cls_w".to_string(), vec![dims.d_model, dims.classes]));
        out.push(("cls_b".to_string(), vec![dims.classes]));
        out
    }

    /// All tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.push(&self.cls_w);
        out.push(&self.cls_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.cls_w);
        out.push(&mut self.cls_b);
        out
    }

    /// Checks every tensor length against `dims`, naming the first offender.
    pub fn check_shapes(&self, dims: &ModelDims) -> Result<()> {
        if self.layers.len() != dims.layers {
            return Err(Error::shape("layers", dims.layers, self.layers.len()));
        }
        for ((name, shape), tensor) in Self::named_shapes(dims).iter().zip(self.tensors()) {
            let expected: usize = shape.iter().product();
            if tensor.len() != expected {
                return Err(Error::shape(name.clone(), format!("{shape:?} ({expected} values)"), tensor.len()));
            }
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// The full maskable network: every sub-network is a masked view of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperNetwork {
    pub dims: ModelDims,
    pub weights: Weights,
}

impl SuperNetwork {
    /// Fresh network: random body, zero-initialised classifier (uniform
    /// predictions before training).
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        let mut net = Self::random(dims, rng)?;
        net.weights.cls_w.iter_mut().for_each(|x| *x = 0.0);
        net.weights.cls_b.iter_mut().for_each(|x| *x = 0.0);
        Ok(net)
    }

    /// Every tensor random, including layer-norm affine parameters and the
    /// classifier. Used where no parameter may be degenerate (gradient checks).
    pub fn random<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let mut w = Weights::zeros(&dims);
        let d = dims.d_model as f64;
        let fill = |t: &mut Vec<f64>, std: f64, mean: f64, rng: &mut R| {
            t.iter_mut().for_each(|x| *x = mean + std * standard_normal(rng));
        };
        fill(&mut w.tok_emb, 1.0, 0.0, rng);
        fill(&mut w.pos_emb, 0.5, 0.0, rng);
        for layer in &mut w.layers {
            fill(&mut layer.wq, 1.0 / d.sqrt(), 0.0, rng);
            fill(&mut layer.wk, 1.0 / d.sqrt(), 0.0, rng);
            fill(&mut layer.wv, 1.0 / d.sqrt(), 0.0, rng);
            fill(&mut layer.wo, 1.0 / (dims.d_head as f64).sqrt() / (dims.heads as f64).sqrt(), 0.0, rng);
            fill(&mut layer.ln1_gamma, 0.1, 1.0, rng);
            fill(&mut layer.ln1_beta, 0.1, 0.0, rng);
            fill(&mut layer.w0, 1.0 / d.sqrt(), 0.0, rng);
            fill(&mut layer.b0, 0.1, 0.0, rng);
            fill(&mut layer.w1, 1.0 / (dims.units as f64).sqrt(), 0.0, rng);
            fill(&mut layer.ln2_gamma, 0.1, 1.0, rng);
            fill(&mut layer.ln2_beta, 0.1, 0.0, rng);
        }
        fill(&mut w.cls_w, 1.0 / d.sqrt(), 0.0, rng);
        fill(&mut w.cls_b, 0.1, 0.0, rng);
        Ok(SuperNetwork { dims, weights: w })
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.dims.validate()?;
        self.weights.check_shapes(&self.dims)
    }

    /// Number of trainable scalars in the full network.
    pub fn num_params(&self) -> u64 {
        self.weights.num_values() as u64
    }
}

/// Binary masks over attention heads (`L×H`) and FFN neurons (`L×U`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskPair {
    pub layers: usize,
    pub heads: usize,
    pub units: usize,
    /// Row-major `L×H`.
    pub head_mask: Vec<u8>,
    /// Row-major `L×U`.
    pub neuron_mask: Vec<u8>,
}

impl MaskPair {
    pub fn ones(dims: &ModelDims) -> Self {
        Self::filled(dims, 1)
    }

    pub fn zeros(dims: &ModelDims) -> Self {
        Self::filled(dims, 0)
    }

    fn filled(dims: &ModelDims, v: u8) -> Self {
        MaskPair {
            layers: dims.layers,
            heads: dims.heads,
            units: dims.units,
            head_mask: vec![v; dims.layers * dims.heads],
            neuron_mask: vec![v; dims.layers * dims.units],
        }
    }

    #[inline]
    pub fn head(&self, layer: usize, head: usize) -> bool {
        self.head_mask[layer * self.heads + head] == 1
    }

    #[inline]
    pub fn neuron(&self, layer: usize, unit: usize) -> bool {
        self.neuron_mask[layer * self.units + unit] == 1
    }

    pub fn set_head(&mut self, layer: usize, head: usize, on: bool) {
        self.head_mask[layer * self.heads + head] = on as u8;
    }

    pub fn set_neuron(&mut self, layer: usize, unit: usize, on: bool) {
        self.neuron_mask[layer * self.units + unit] = on as u8;
    }

    pub fn head_row(&self, layer: usize) -> &[u8] {
        &self.head_mask[layer * self.heads..(layer + 1) * self.heads]
    }

    pub fn neuron_row(&self, layer: usize) -> &[u8] {
        &self.neuron_mask[layer * self.units..(layer + 1) * self.units]
    }

    pub fn active_heads(&self) -> usize {
        self.head_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn active_neurons(&self) -> usize {
        self.neuron_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Rejects wrong sizes and entries other than 0/1.
    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        if (self.layers, self.heads, self.units) != (dims.layers, dims.heads, dims.units) {
            return Err(Error::shape(
                "mask",
                format!("L={} H={} U={}", dims.layers, dims.heads, dims.units),
                format!("L={} H={} U={}", self.layers, self.heads, self.units),
            ));
        }
        if self.head_mask.len() != dims.layers * dims.heads {
            return Err(Error::shape("head_mask", dims.layers * dims.heads, self.head_mask.len()));
        }
        if self.neuron_mask.len() != dims.layers * dims.units {
            return Err(Error::shape("neuron_mask", dims.layers * dims.units, self.neuron_mask.len()));
        }
        for (name, data, cols) in [
            ("head_mask", &self.head_mask, dims.heads),
            ("neuron_mask", &self.neuron_mask, dims.units),
        ] {
            if let Some((i, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(Error::NonBinaryMask {
                    name,
                    row: i / cols,
                    col: i % cols,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Tokenised inputs of equal length plus class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub seq_len: usize,
    /// Row-major `batch × seq_len`.
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(seq_len: usize, tokens: Vec<usize>, labels: Vec<usize>) -> Self {
        Batch { seq_len, tokens, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &[usize] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        if self.seq_len == 0 || self.seq_len > dims.max_len {
            return Err(Error::shape("batch.seq_len", format!("1..={}", dims.max_len), self.seq_len));
        }
        if self.tokens.len() != self.labels.len() * self.seq_len {
            return Err(Error::shape(
                "batch.tokens",
                self.labels.len() * self.seq_len,
                self.tokens.len(),
            ));
        }
        if let Some(t) = self.tokens.iter().find(|&&t| t >= dims.vocab) {
            return Err(Error::InvalidArgument(format!("token id {t} ≥ vocab size {}", dims.vocab)));
        }
        if let Some(c) = self.labels.iter().find(|&&c| c >= dims.classes) {
            return Err(Error::InvalidArgument(format!("label {c} ≥ class count {}", dims.classes)));
        }
        Ok(())
    }
}

/// Dense row-major matrix, used for logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Index of the largest entry of each row (first one on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
