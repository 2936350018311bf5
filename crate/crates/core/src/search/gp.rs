//! Gaussian-process surrogate with a Matérn-5/2 kernel.
//!
//! All outputs share one kernel (lengthscales, signal and noise variance);
//! each output is standardised and gets its own posterior solve. Kernel
//! hyperparameters maximise the summed log marginal likelihood, found by a
//! seeded random search in log space followed by coordinate refinement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter tried in turn when the kernel matrix is not positive definite.
const JITTER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// One per input dimension (ARD) or a single shared value.
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFitSettings {
    /// Per-dimension lengthscales; otherwise one isotropic lengthscale.
    pub ard: bool,
    /// Fix the noise variance instead of fitting it.
    pub fixed_noise: Option<f64>,
    /// Random hyperparameter candidates before refinement.
    pub candidates: usize,
}

impl Default for GpFitSettings {
    fn default() -> Self {
        GpFitSettings {
            ard: true,
            fixed_noise: None,
            candidates: 48,
        }
    }
}

impl GpFitSettings {
    /// ARD for up to ten inputs, isotropic beyond that.
    pub fn for_dim(dim: usize) -> Self {
        GpFitSettings {
            ard: dim <= 10,
            ..Self::default()
        }
    }
}

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            let l = if ls.len() == 1 { ls[0] } else { ls[i] };
            let d = (x - y) / l;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn kernel(a: &[f64], b: &[f64], h: &GpHyper) -> f64 {
    h.signal_var * matern52(scaled_dist(a, b, &h.lengthscales))
}

/// A fitted posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyper,
    x: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `K⁻¹ y` per standardised output.
    alphas: Vec<DVector<f64>>,
    /// Standardised training targets per output.
    targets: Vec<DVector<f64>>,
}

fn factor(x: &[Vec<f64>], h: &GpHyper) -> Option<Cholesky<f64, Dyn>> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(&x[i], &x[j], h));
    JITTER.iter().find_map(|&j| {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += h.noise_var + j;
        }
        Cholesky::new(m)
    })
}

fn log_marginal(chol: &Cholesky<f64, Dyn>, targets: &[DVector<f64>]) -> f64 {
    let n = targets[0].len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    targets
        .iter()
        .map(|y| {
            let alpha = chol.solve(y);
            -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

impl GpModel {
    /// Fits the shared kernel to `x` (`n` inputs) and `y` (`n` rows of
    /// `m` outputs each).
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], settings: &GpFitSettings, rng: &mut impl Rng) -> Result<GpModel> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidArgument(format!("GP needs >= 2 matching inputs and outputs, got {} and {}", n, y.len())));
        }
        let dim = x[0].len();
        let m = y[0].len();
        if dim == 0 || m == 0 || x.iter().any(|r| r.len() != dim) || y.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged GP training data".into()));
        }
        if x.iter().flatten().chain(y.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite GP training data".into()));
        }
        let mut means = Vec::with_capacity(m);
        let mut scales = Vec::with_capacity(m);
        let mut targets = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = y.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
            targets.push(DVector::from_iterator(n, col.iter().map(|v| (v - mean) / scale)));
            means.push(mean);
            scales.push(scale);
        }

        let n_ls = if settings.ard { dim } else { 1 };
        let score = |h: &GpHyper| factor(x, h).map(|c| log_marginal(&c, &targets)).filter(|v| v.is_finite());
        let log_uniform = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| (rng.gen_range(lo.ln()..hi.ln())).exp();

        let mut best = GpHyper {
            lengthscales: vec![0.5; n_ls],
            signal_var: 1.0,
            noise_var: settings.fixed_noise.unwrap_or(1e-3),
        };
        let mut best_score = score(&best).unwrap_or(f64::NEG_INFINITY);
        for _ in 0..settings.candidates {
            let h = GpHyper {
                lengthscales: (0..n_ls).map(|_| log_uniform(rng, 0.05, 5.0)).collect(),
                signal_var: log_uniform(rng, 0.1, 10.0),
                noise_var: settings.fixed_noise.unwrap_or_else(|| log_uniform(rng, 1e-6, 0.1)),
            };
            if let Some(s) = score(&h) {
                if s > best_score {
                    best_score = s;
                    best = h;
                }
            }
        }
        // coordinate refinement over lengthscales, signal and noise
        let n_params = n_ls + 1 + usize::from(settings.fixed_noise.is_none());
        for _ in 0..3 {
            for p in 0..n_params {
                for factor in [0.5, 0.8, 1.25, 2.0] {
                    let mut h = best.clone();
                    match p {
                        p if p < n_ls => h.lengthscales[p] = (h.lengthscales[p] * factor).clamp(1e-3, 1e3),
                        p if p == n_ls => h.signal_var = (h.signal_var * factor).clamp(1e-3, 1e3),
                        _ => h.noise_var = (h.noise_var * factor).clamp(1e-9, 1.0),
                    }
                    if let Some(s) = score(&h) {
                        if s > best_score {
                            best_score = s;
                            best = h;
                        }
                    }
                }
            }
        }
        let chol = factor(x, &best).ok_or_else(|| Error::Numeric {
            context: "GP kernel matrix is not positive definite even with jitter".into(),
        })?;
        let alphas = targets.iter().map(|t| chol.solve(t)).collect();
        Ok(GpModel {
            hyper: best,
            x: x.to_vec(),
            means,
            scales,
            chol,
            alphas,
            targets,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn outputs(&self) -> usize {
        self.means.len()
    }

    /// Training targets in standardised units, `[output][point]`.
    pub fn standardized_targets(&self) -> Vec<Vec<f64>> {
        self.targets.iter().map(|t| t.iter().copied().collect()).collect()
    }

    /// Latent posterior mean and variance per output, standardised units.
    pub fn predict_standardized(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.x.len();
        let ks = DVector::from_iterator(n, self.x.iter().map(|xi| kernel(xi, x, &self.hyper)));
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        let means = self.alphas.iter().map(|a| ks.dot(a)).collect();
        (means, vec![var; self.outputs()])
    }

    /// Posterior mean and standard deviation per output in raw units.
    pub fn predict(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mu, var) = self.predict_standardized(x);
        let mean = mu.iter().enumerate().map(|(j, m)| self.means[j] + self.scales[j] * m).collect();
        let sd = var.iter().enumerate().map(|(j, v)| self.scales[j] * v.sqrt()).collect();
        (mean, sd)
    }
}
