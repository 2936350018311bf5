use serde::{Deserialize, Serialize};

use super::ObjectiveVector;
use crate::error::{Error, Result};

/// Rank-based mapping of pooled observations onto `[0, 1]`.
///
/// A pooled value maps to its mid-rank (0-based, ties share the mean of
/// their ranks) divided by `N − 1`. Values between pooled values are linearly
/// interpolated; values outside the pooled range clip to 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalizer {
    /// Distinct pooled values, ascending.
    knots: Vec<f64>,
    /// Normalised value of each knot.
    levels: Vec<f64>,
}

impl QuantileNormalizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "quantile normalisation needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("quantile normalisation of non-finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let denom = (sorted.len() - 1) as f64;
        let mut knots = Vec::new();
        let mut levels = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            knots.push(sorted[i]);
            levels.push((i + j) as f64 / 2.0 / denom);
            i = j + 1;
        }
        Ok(QuantileNormalizer { knots, levels })
    }

    pub fn transform(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] {
            return if x == k[0] { self.levels[0] } else { 0.0 };
        }
        if x >= k[k.len() - 1] {
            return if x == k[k.len() - 1] { self.levels[k.len() - 1] } else { 1.0 };
        }
        // first knot strictly greater than x
        let hi = k.partition_point(|&v| v <= x);
        let lo = hi - 1;
        if k[lo] == x {
            return self.levels[lo];
        }
        let w = (x - k[lo]) / (k[hi] - k[lo]);
        (self.levels[lo] + w * (self.levels[hi] - self.levels[lo])).clamp(0.0, 1.0)
    }
}

/// Independent quantile normalisers for both objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveNormalizer {
    pub f0: QuantileNormalizer,
    pub f1: QuantileNormalizer,
}

impl ObjectiveNormalizer {
    pub fn fit(points: &[ObjectiveVector]) -> Result<Self> {
        let f0: Vec<f64> = points.iter().map(|p| p.f0).collect();
        let f1: Vec<f64> = points.iter().map(|p| p.f1).collect();
        Ok(ObjectiveNormalizer {
            f0: QuantileNormalizer::fit(&f0)?,
            f1: QuantileNormalizer::fit(&f1)?,
        })
    }

    pub fn transform(&self, p: &ObjectiveVector) -> ObjectiveVector {
        ObjectiveVector::new(self.f0.transform(p.f0), self.f1.transform(p.f1))
    }

    pub fn transform_all(&self, points: &[ObjectiveVector]) -> Vec<ObjectiveVector> {
        points.iter().map(|p| self.transform(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_over_n_minus_one() {
        let q = QuantileNormalizer::fit(&[20.0, 10.0, 30.0]).unwrap();
        assert_eq!([q.transform(10.0), q.transform(20.0), q.transform(30.0)], [0.0, 0.5, 1.0]);
    }

    #[test]
    fn ties_take_mid_rank() {
        let q = QuantileNormalizer::fit(&[5.0, 5.0]).unwrap();
        assert_eq!(q.transform(5.0), 0.5);
        let q = QuantileNormalizer::fit(&[1.0, 2.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.transform(2.0), 0.5);
    }

    #[test]
    fn out_of_sample_interpolates_and_clips() {
        let q = QuantileNormalizer::fit(&[0.0, 10.0, 20.0]).unwrap();
        assert!((q.transform(5.0) - 0.25).abs() < 1e-15);
        assert_eq!(q.transform(-3.0), 0.0);
        assert_eq!(q.transform(99.0), 1.0);
    }

    #[test]
    fn too_few_values_rejected() {
        assert!(QuantileNormalizer::fit(&[1.0]).is_err());
        assert!(QuantileNormalizer::fit(&[]).is_err());
    }
}
