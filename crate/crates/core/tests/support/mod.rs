//! Test-only oracles that do not share code paths with the library.
#![allow(dead_code)]

use nasprune::transformer::{Batch, MaskPair, ModelDims, SuperNetwork};

/// One encoder layer with masked heads and neurons physically removed.
pub struct PrunedLayer {
    /// Per kept head: (wq, wk, wv) each `d_model×d_head`, wo `d_head×d_model`.
    pub heads: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    pub ln1: (Vec<f64>, Vec<f64>),
    /// `u'×d_model`
    pub w0: Vec<Vec<f64>>,
    pub b0: Vec<f64>,
    /// `d_model×u'`
    pub w1: Vec<Vec<f64>>,
    pub ln2: (Vec<f64>, Vec<f64>),
}

/// A network rebuilt from the kept slices of a super-network.
pub struct PrunedNetwork {
    pub dims: ModelDims,
    pub tok_emb: Vec<Vec<f64>>,
    pub pos_emb: Vec<Vec<f64>>,
    pub layers: Vec<PrunedLayer>,
    pub cls_w: Vec<Vec<f64>>,
    pub cls_b: Vec<f64>,
}

fn rows(data: &[f64], r: usize, c: usize) -> Vec<Vec<f64>> {
    (0..r).map(|i| data[i * c..(i + 1) * c].to_vec()).collect()
}

impl PrunedNetwork {
    pub fn build(net: &SuperNetwork, mask: &MaskPair) -> Self {
        let dims = net.dims;
        let (d, dh, u) = (dims.d_model, dims.d_head, dims.units);
        let w = &net.weights;
        let layers = (0..dims.layers)
            .map(|l| {
                let lw = &w.layers[l];
                let heads = (0..dims.heads)
                    .filter(|&i| mask.head_mask[l * dims.heads + i] == 1)
                    .map(|i| {
                        let sl = |t: &Vec<f64>| rows(&t[i * d * dh..(i + 1) * d * dh], d, dh);
                        (sl(&lw.wq), sl(&lw.wk), sl(&lw.wv), rows(&lw.wo[i * dh * d..(i + 1) * dh * d], dh, d))
                    })
                    .collect();
                let kept: Vec<usize> = (0..u).filter(|&j| mask.neuron_mask[l * u + j] == 1).collect();
                let w0 = kept.iter().map(|&j| lw.w0[j * d..(j + 1) * d].to_vec()).collect();
                let b0 = kept.iter().map(|&j| lw.b0[j]).collect();
                let w1 = (0..d).map(|k| kept.iter().map(|&j| lw.w1[k * u + j]).collect()).collect();
                PrunedLayer {
                    heads,
                    ln1: (lw.ln1_gamma.clone(), lw.ln1_beta.clone()),
                    w0,
                    b0,
                    w1,
                    ln2: (lw.ln2_gamma.clone(), lw.ln2_beta.clone()),
                }
            })
            .collect();
        PrunedNetwork {
            dims,
            tok_emb: rows(&w.tok_emb, dims.vocab, d),
            pos_emb: rows(&w.pos_emb, dims.max_len, d),
            layers,
            cls_w: rows(&w.cls_w, d, dims.classes),
            cls_b: w.cls_b.clone(),
        }
    }

    /// Total scalar count of every tensor the pruned network holds.
    pub fn count_params(&self) -> u64 {
        let mat = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.len()).sum::<usize>();
        let mut n = mat(&self.tok_emb) + mat(&self.pos_emb) + mat(&self.cls_w) + self.cls_b.len();
        for l in &self.layers {
            for (q, k, v, o) in &l.heads {
                n += mat(q) + mat(k) + mat(v) + mat(o);
            }
            n += l.ln1.0.len() + l.ln1.1.len() + l.ln2.0.len() + l.ln2.1.len();
            n += mat(&l.w0) + l.b0.len() + mat(&l.w1);
        }
        n as u64
    }

    pub fn forward(&self, batch: &Batch) -> Vec<Vec<f64>> {
        (0..batch.labels.len()).map(|i| self.forward_one(batch.sequence(i))).collect()
    }

    fn forward_one(&self, seq: &[usize]) -> Vec<f64> {
        let d = self.dims.d_model;
        let mut x: Vec<Vec<f64>> = seq
            .iter()
            .enumerate()
            .map(|(t, &tok)| (0..d).map(|k| self.tok_emb[tok][k] + self.pos_emb[t][k]).collect())
            .collect();
        for layer in &self.layers {
            x = self.layer(layer, &x);
        }
        let n = x.len() as f64;
        let pooled: Vec<f64> = (0..d).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        (0..self.cls_b.len())
            .map(|c| self.cls_b[c] + (0..d).map(|k| pooled[k] * self.cls_w[k][c]).sum::<f64>())
            .collect()
    }

    fn layer(&self, layer: &PrunedLayer, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = x.len();
        let d = self.dims.d_model;
        let mut z: Vec<Vec<f64>> = x.to_vec();
        for (wq, wk, wv, wo) in &layer.heads {
            let proj = |w: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                x.iter()
                    .map(|row| (0..w[0].len()).map(|a| (0..d).map(|k| row[k] * w[k][a]).sum()).collect())
                    .collect()
            };
            let (q, k, v) = (proj(wq), proj(wk), proj(wv));
            let dh = q[0].len();
            for t in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|s| (0..dh).map(|a| q[t][a] * k[s][a]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let tot: f64 = e.iter().sum();
                let att: Vec<f64> = (0..dh).map(|a| (0..n).map(|s| e[s] / tot * v[s][a]).sum()).collect();
                for j in 0..d {
                    z[t][j] += (0..dh).map(|a| att[a] * wo[a][j]).sum::<f64>();
                }
            }
        }
        let y: Vec<Vec<f64>> = z.iter().map(|r| ln(r, &layer.ln1.0, &layer.ln1.1)).collect();
        let mut z2 = y.clone();
        for t in 0..n {
            let hidden: Vec<f64> = layer
                .w0
                .iter()
                .zip(&layer.b0)
                .map(|(row, b)| gelu(row.iter().zip(&y[t]).map(|(a, b)| a * b).sum::<f64>() + b))
                .collect();
            for k in 0..d {
                z2[t][k] += layer.w1[k].iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        z2.iter().map(|r| ln(r, &layer.ln2.0, &layer.ln2.1)).collect()
    }
}

fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(k, v)| g[k] * (v - mu) / (var + 1e-5).sqrt() + b[k])
        .collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

/// Largest relative deviation between two logit tables.
pub fn max_rel_err(a: &[Vec<f64>], b: &[f64], cols: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let y = b[i * cols + j];
            let err = (x - y).abs() / x.abs().max(y.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}

/// Worst relative error between analytic and central-difference gradients of
/// `loss` over every scalar of every tensor, plus the index of the worst tensor.
pub fn finite_difference_check(
    net: &SuperNetwork,
    analytic: &nasprune::transformer::Weights,
    step: f64,
    mut loss: impl FnMut(&SuperNetwork) -> f64,
) -> Vec<(String, f64)> {
    let names = nasprune::transformer::Weights::named_shapes(&net.dims);
    let mut probe = net.clone();
    let grads = analytic.tensors();
    let mut out = Vec::new();
    for (ti, (name, _)) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..grads[ti].len() {
            let orig = probe.weights.tensors()[ti][idx];
            probe.weights.tensors_mut()[ti][idx] = orig + step;
            let plus = loss(&probe);
            probe.weights.tensors_mut()[ti][idx] = orig - step;
            let minus = loss(&probe);
            probe.weights.tensors_mut()[ti][idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = grads[ti][idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
        out.push((name.clone(), worst));
    }
    out
}

/// Front layers by repeated O(n²) peeling: layer `k` holds every remaining
/// point no other remaining point beats in both objectives.
pub fn brute_force_layers(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let beats = |a: (f64, f64), b: (f64, f64)| a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1);
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut layers = Vec::new();
    while !left.is_empty() {
        let (front, rest): (Vec<usize>, Vec<usize>) = left
            .iter()
            .partition(|&&i| !left.iter().any(|&j| beats(points[j], points[i])));
        layers.push(front);
        left = rest;
    }
    layers
}

/// Hypervolume by counting cell midpoints of a `cells × cells` grid over
/// `[0, r0] × [0, r1]`.
pub fn grid_hypervolume(points: &[(f64, f64)], r: (f64, f64), cells: usize) -> f64 {
    let (w, h) = (r.0 / cells as f64, r.1 / cells as f64);
    let mut hit = 0usize;
    for i in 0..cells {
        let x = (i as f64 + 0.5) * w;
        for j in 0..cells {
            let y = (j as f64 + 0.5) * h;
            if points.iter().any(|p| p.0 <= x && p.1 <= y) {
                hit += 1;
            }
        }
    }
    hit as f64 * w * h
}

/// Kolmogorov-Smirnov distance of a sample to `U[lo, hi]`.
pub fn ks_uniform(values: &[f64], lo: f64, hi: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov-Smirnov distance of a sample to the uniform distribution over
/// the listed support points.
pub fn ks_discrete_uniform(values: &[f64], support: &[f64]) -> f64 {
    let mut s = support.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() as f64;
    let n = values.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let emp = values.iter().filter(|&&v| v <= x).count() as f64 / n;
            (emp - (i + 1) as f64 / k).abs()
        })
        .fold(0.0, f64::max)
}

/// Number of strict local maxima of a moving-average smoothed histogram.
pub fn histogram_modes(counts: &[usize]) -> usize {
    let n = counts.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            counts[lo..=hi].iter().sum::<usize>() as f64 / (hi - lo + 1) as f64
        })
        .collect();
    let mut modes = 0;
    let mut i = 0;
    while i < n {
        // plateaus count once
        let mut j = i;
        while j + 1 < n && smooth[j + 1] == smooth[i] {
            j += 1;
        }
        let left = i == 0 || smooth[i - 1] < smooth[i];
        let right = j == n - 1 || smooth[j + 1] < smooth[i];
        if left && right {
            modes += 1;
        }
        i = j + 1;
    }
    modes
}
