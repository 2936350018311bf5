//! Masked forward pass, distillation loss and exact reverse-mode gradients.

use super::{Batch, LayerWeights, MaskPair, Matrix, ModelDims, SuperNetwork, Weights};
use crate::error::{Error, Result};
use crate::linalg::{
    dot, log_softmax, matmul, matmul_acc, matmul_at_acc, matmul_bt, matmul_bt_acc, softmax_in_place,
};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Soft targets for in-place distillation.
#[derive(Debug, Clone, Copy)]
pub struct Teacher<'a> {
    /// Teacher logits, same shape as the student logits. Treated as constants.
    pub logits: &'a Matrix,
    pub temperature: f64,
}

/// Batch-mean loss components.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub loss: f64,
    pub cross_entropy: f64,
    /// `KL(softmax(teacher/T) ‖ softmax(student/T))`, zero without a teacher.
    pub kl: f64,
    pub logits: Matrix,
}

struct HeadCache {
    head: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    a: Vec<f64>,
}

struct LayerCache {
    x: Vec<f64>,
    heads: Vec<HeadCache>,
    xhat1: Vec<f64>,
    rstd1: Vec<f64>,
    y1: Vec<f64>,
    active: Vec<usize>,
    /// `n × |active|` pre-activations and activations.
    hpre: Vec<f64>,
    g: Vec<f64>,
    xhat2: Vec<f64>,
    rstd2: Vec<f64>,
}

struct SeqCache {
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
}

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise layer norm of `z` (`n×d`); fills `y`, the normalised input and 1/std.
fn layer_norm(z: &[f64], n: usize, d: usize, gamma: &[f64], beta: &[f64], y: &mut [f64], xhat: &mut [f64], rstd: &mut [f64]) {
    for t in 0..n {
        let row = &z[t * d..(t + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[t] = r;
        for k in 0..d {
            let xh = (row[k] - mean) * r;
            xhat[t * d + k] = xh;
            y[t * d + k] = gamma[k] * xh + beta[k];
        }
    }
}

/// Backward of [`layer_norm`]: accumulates parameter gradients, returns dz.
fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    rstd: &[f64],
    gamma: &[f64],
    n: usize,
    d: usize,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let mut dz = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for t in 0..n {
        let dyr = &dy[t * d..(t + 1) * d];
        let xr = &xhat[t * d..(t + 1) * d];
        for k in 0..d {
            dgamma[k] += dyr[k] * xr[k];
            dbeta[k] += dyr[k];
            dxhat[k] = dyr[k] * gamma[k];
        }
        let mean_dx = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxx = dot(&dxhat, xr) / d as f64;
        for k in 0..d {
            dz[t * d + k] = rstd[t] * (dxhat[k] - mean_dx - xr[k] * mean_dxx);
        }
    }
    dz
}

fn layer_forward(dims: &ModelDims, w: &LayerWeights, mask: &MaskPair, layer: usize, x: Vec<f64>, n: usize) -> (Vec<f64>, LayerCache) {
    let (d, dh, u) = (dims.d_model, dims.d_head, dims.units);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut z1 = x.clone();
    let mut heads = Vec::new();
    for i in 0..dims.heads {
        if !mask.head(layer, i) {
            continue;
        }
        let wslice = |t: &[f64]| t[i * d * dh..(i + 1) * d * dh].to_vec();
        let (wq, wk, wv) = (wslice(&w.wq), wslice(&w.wk), wslice(&w.wv));
        let mut q = vec![0.0; n * dh];
        let mut k = vec![0.0; n * dh];
        let mut v = vec![0.0; n * dh];
        matmul(&x, &wq, n, d, dh, &mut q);
        matmul(&x, &wk, n, d, dh, &mut k);
        matmul(&x, &wv, n, d, dh, &mut v);
        let mut p = vec![0.0; n * n];
        matmul_bt(&q, &k, n, dh, n, &mut p);
        for t in 0..n {
            let row = &mut p[t * n..(t + 1) * n];
            row.iter_mut().for_each(|s| *s *= scale);
            softmax_in_place(row);
        }
        let mut a = vec![0.0; n * dh];
        matmul(&p, &v, n, n, dh, &mut a);
        // residual sum receives this head's projected output
        matmul_acc(&a, &w.wo[i * dh * d..(i + 1) * dh * d], n, dh, d, &mut z1);
        heads.push(HeadCache { head: i, q, k, v, p, a });
    }
    let mut y1 = vec![0.0; n * d];
    let mut xhat1 = vec![0.0; n * d];
    let mut rstd1 = vec![0.0; n];
    layer_norm(&z1, n, d, &w.ln1_gamma, &w.ln1_beta, &mut y1, &mut xhat1, &mut rstd1);

    let active: Vec<usize> = (0..u).filter(|&j| mask.neuron(layer, j)).collect();
    let na = active.len();
    let mut hpre = vec![0.0; n * na];
    let mut g = vec![0.0; n * na];
    let mut z2 = y1.clone();
    for t in 0..n {
        let yrow = &y1[t * d..(t + 1) * d];
        for (c, &j) in active.iter().enumerate() {
            let h = dot(yrow, &w.w0[j * d..(j + 1) * d]) + w.b0[j];
            hpre[t * na + c] = h;
            g[t * na + c] = gelu(h);
        }
        let grow = &g[t * na..(t + 1) * na];
        for kk in 0..d {
            let w1row = &w.w1[kk * u..(kk + 1) * u];
            let mut s = 0.0;
            for (c, &j) in active.iter().enumerate() {
                s += grow[c] * w1row[j];
            }
            z2[t * d + kk] += s;
        }
    }
    let mut y2 = vec![0.0; n * d];
    let mut xhat2 = vec![0.0; n * d];
    let mut rstd2 = vec![0.0; n];
    layer_norm(&z2, n, d, &w.ln2_gamma, &w.ln2_beta, &mut y2, &mut xhat2, &mut rstd2);
    let cache = LayerCache {
        x,
        heads,
        xhat1,
        rstd1,
        y1,
        active,
        hpre,
        g,
        xhat2,
        rstd2,
    };
    (y2, cache)
}

fn layer_backward(dims: &ModelDims, w: &LayerWeights, gw: &mut LayerWeights, cache: &LayerCache, dy2: &[f64], n: usize) -> Vec<f64> {
    let (d, dh, u) = (dims.d_model, dims.d_head, dims.units);
    let scale = 1.0 / (dh as f64).sqrt();

    let dz2 = layer_norm_backward(dy2, &cache.xhat2, &cache.rstd2, &w.ln2_gamma, n, d, &mut gw.ln2_gamma, &mut gw.ln2_beta);
    // residual: dY1 starts as dZ2; FFN output gradient is dZ2 too
    let mut dy1 = dz2.clone();
    let na = cache.active.len();
    if na > 0 {
        let mut dh_pre = vec![0.0; n * na];
        for t in 0..n {
            let dfrow = &dz2[t * d..(t + 1) * d];
            for (c, &j) in cache.active.iter().enumerate() {
                let mut dg = 0.0;
                for kk in 0..d {
                    dg += dfrow[kk] * w.w1[kk * u + j];
                    gw.w1[kk * u + j] += dfrow[kk] * cache.g[t * na + c];
                }
                dh_pre[t * na + c] = dg * gelu_grad(cache.hpre[t * na + c]);
            }
        }
        for t in 0..n {
            let yrow = &cache.y1[t * d..(t + 1) * d];
            for (c, &j) in cache.active.iter().enumerate() {
                let dh = dh_pre[t * na + c];
                gw.b0[j] += dh;
                let gw0 = &mut gw.w0[j * d..(j + 1) * d];
                let w0 = &w.w0[j * d..(j + 1) * d];
                let dyrow = &mut dy1[t * d..(t + 1) * d];
                for kk in 0..d {
                    gw0[kk] += dh * yrow[kk];
                    dyrow[kk] += dh * w0[kk];
                }
            }
        }
    }
    let dz1 = layer_norm_backward(&dy1, &cache.xhat1, &cache.rstd1, &w.ln1_gamma, n, d, &mut gw.ln1_gamma, &mut gw.ln1_beta);
    let mut dx = dz1.clone();
    for hc in &cache.heads {
        let i = hc.head;
        let wo = &w.wo[i * dh * d..(i + 1) * dh * d];
        let mut da = vec![0.0; n * dh];
        matmul_bt(&dz1, wo, n, d, dh, &mut da);
        matmul_at_acc(&hc.a, &dz1, n, dh, d, &mut gw.wo[i * dh * d..(i + 1) * dh * d]);
        let mut dp = vec![0.0; n * n];
        matmul_bt(&da, &hc.v, n, dh, n, &mut dp);
        let mut dv = vec![0.0; n * dh];
        matmul_at_acc(&hc.p, &da, n, n, dh, &mut dv);
        // softmax backward, folding in the score scale
        let mut ds = vec![0.0; n * n];
        for t in 0..n {
            let prow = &hc.p[t * n..(t + 1) * n];
            let dprow = &dp[t * n..(t + 1) * n];
            let inner = dot(prow, dprow);
            for s in 0..n {
                ds[t * n + s] = prow[s] * (dprow[s] - inner) * scale;
            }
        }
        let mut dq = vec![0.0; n * dh];
        matmul(&ds, &hc.k, n, n, dh, &mut dq);
        let mut dk = vec![0.0; n * dh];
        matmul_at_acc(&ds, &hc.q, n, n, dh, &mut dk);
        let range = i * d * dh..(i + 1) * d * dh;
        for (grad, proj, weight) in [(&mut gw.wq, &dq, &w.wq), (&mut gw.wk, &dk, &w.wk), (&mut gw.wv, &dv, &w.wv)] {
            matmul_at_acc(&cache.x, proj, n, d, dh, &mut grad[range.clone()]);
            matmul_bt_acc(proj, &weight[range.clone()], n, dh, d, &mut dx);
        }
    }
    dx
}

fn embed(net: &SuperNetwork, seq: &[usize]) -> Vec<f64> {
    let d = net.dims.d_model;
    let w = &net.weights;
    let mut x = vec![0.0; seq.len() * d];
    for (t, &tok) in seq.iter().enumerate() {
        for k in 0..d {
            x[t * d + k] = w.tok_emb[tok * d + k] + w.pos_emb[t * d + k];
        }
    }
    x
}

fn forward_sequence(net: &SuperNetwork, mask: &MaskPair, seq: &[usize], logits: &mut [f64]) -> SeqCache {
    let dims = &net.dims;
    let (n, d, c) = (seq.len(), dims.d_model, dims.classes);
    let mut x = embed(net, seq);
    let mut layers = Vec::with_capacity(dims.layers);
    for (l, lw) in net.weights.layers.iter().enumerate() {
        let (y, cache) = layer_forward(dims, lw, mask, l, x, n);
        layers.push(cache);
        x = y;
    }
    let mut pooled = vec![0.0; d];
    for t in 0..n {
        for k in 0..d {
            pooled[k] += x[t * d + k];
        }
    }
    pooled.iter_mut().for_each(|p| *p /= n as f64);
    logits.copy_from_slice(&net.weights.cls_b);
    matmul_acc(&pooled, &net.weights.cls_w, 1, d, c, logits);
    SeqCache { layers, pooled }
}

fn backward_sequence(net: &SuperNetwork, seq: &[usize], cache: &SeqCache, dlogits: &[f64], grads: &mut Weights) {
    let dims = &net.dims;
    let (n, d, c) = (seq.len(), dims.d_model, dims.classes);
    for k in 0..d {
        for j in 0..c {
            grads.cls_w[k * c + j] += cache.pooled[k] * dlogits[j];
        }
    }
    for j in 0..c {
        grads.cls_b[j] += dlogits[j];
    }
    let mut dpooled = vec![0.0; d];
    matmul_bt(dlogits, &net.weights.cls_w, 1, c, d, &mut dpooled);
    let mut dx = vec![0.0; n * d];
    for t in 0..n {
        for k in 0..d {
            dx[t * d + k] = dpooled[k] / n as f64;
        }
    }
    for l in (0..dims.layers).rev() {
        dx = layer_backward(dims, &net.weights.layers[l], &mut grads.layers[l], &cache.layers[l], &dx, n);
    }
    for (t, &tok) in seq.iter().enumerate() {
        for k in 0..d {
            grads.tok_emb[tok * d + k] += dx[t * d + k];
            grads.pos_emb[t * d + k] += dx[t * d + k];
        }
    }
}

fn check_inputs(net: &SuperNetwork, mask: &MaskPair, batch: &Batch) -> Result<()> {
    net.check_shapes()?;
    mask.validate(&net.dims)?;
    batch.validate(&net.dims)
}

/// Logits (`batch × C`) of the sub-network selected by `mask`.
///
/// Masked heads and neurons are skipped entirely, so their contribution is
/// exactly zero rather than numerically small.
pub fn forward_masked(net: &SuperNetwork, mask: &MaskPair, batch: &Batch) -> Result<Matrix> {
    check_inputs(net, mask, batch)?;
    let mut logits = Matrix::zeros(batch.len(), net.dims.classes);
    for i in 0..batch.len() {
        forward_sequence(net, mask, batch.sequence(i), logits.row_mut(i));
    }
    if logits.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            context: "forward pass produced non-finite logits".into(),
        });
    }
    Ok(logits)
}

/// Loss and gradients; see [`accumulate_loss_and_grads`].
pub fn loss_and_grads(net: &SuperNetwork, mask: &MaskPair, batch: &Batch, teacher: Option<Teacher<'_>>) -> Result<(LossBreakdown, Weights)> {
    let mut grads = Weights::zeros(&net.dims);
    let loss = accumulate_loss_and_grads(net, mask, batch, teacher, &mut grads)?;
    Ok((loss, grads))
}

/// Computes `L_CE` (plus `KL(softmax(teacher/T) ‖ softmax(student/T))` when a
/// teacher is given), both averaged over the batch, and adds the exact
/// gradient of that loss into `grads`.
///
/// No `T²` rescaling is applied to the distillation term.
pub fn accumulate_loss_and_grads(
    net: &SuperNetwork,
    mask: &MaskPair,
    batch: &Batch,
    teacher: Option<Teacher<'_>>,
    grads: &mut Weights,
) -> Result<LossBreakdown> {
    check_inputs(net, mask, batch)?;
    grads.check_shapes(&net.dims)?;
    let c = net.dims.classes;
    let bsz = batch.len();
    if bsz == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(t) = teacher {
        if !(t.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {}", t.temperature)));
        }
        if (t.logits.rows, t.logits.cols) != (bsz, c) {
            return Err(Error::shape("teacher_logits", format!("{bsz}×{c}"), format!("{}×{}", t.logits.rows, t.logits.cols)));
        }
    }

    let mut logits = Matrix::zeros(bsz, c);
    let mut caches = Vec::with_capacity(bsz);
    for i in 0..bsz {
        caches.push(forward_sequence(net, mask, batch.sequence(i), logits.row_mut(i)));
    }
    if logits.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            context: "forward pass produced non-finite logits".into(),
        });
    }

    let inv_b = 1.0 / bsz as f64;
    let mut ce = 0.0;
    let mut kl = 0.0;
    let mut dlogits = Matrix::zeros(bsz, c);
    let mut logp = vec![0.0; c];
    for i in 0..bsz {
        let z = logits.row(i);
        log_softmax(z, &mut logp);
        let y = batch.labels[i];
        ce -= logp[y];
        let dz = dlogits.row_mut(i);
        for j in 0..c {
            dz[j] = (logp[j].exp() - (j == y) as u8 as f64) * inv_b;
        }
        if let Some(t) = teacher {
            let temp = t.temperature;
            let zs: Vec<f64> = z.iter().map(|v| v / temp).collect();
            let zt: Vec<f64> = t.logits.row(i).iter().map(|v| v / temp).collect();
            let mut lq = vec![0.0; c];
            let mut lp = vec![0.0; c];
            log_softmax(&zs, &mut lq);
            log_softmax(&zt, &mut lp);
            for j in 0..c {
                let p = lp[j].exp();
                kl += p * (lp[j] - lq[j]);
                dz[j] += (lq[j].exp() - p) / temp * inv_b;
            }
        }
    }
    ce *= inv_b;
    kl *= inv_b;
    let loss = ce + kl;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            context: "loss is not finite".into(),
        });
    }
    for i in 0..bsz {
        backward_sequence(net, batch.sequence(i), &caches[i], dlogits.row(i), grads);
    }
    Ok(LossBreakdown {
        loss,
        cross_entropy: ce,
        kl,
        logits,
    })
}
