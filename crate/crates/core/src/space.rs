//! The four sub-network search spaces and their mapping onto masks.
//!
//! | space  | coordinates                         | mask rule                                      |
//! |--------|-------------------------------------|------------------------------------------------|
//! | SMALL  | `(h, u, l)`                         | first `l` layers keep their first `h` heads / `u` units |
//! | LAYER  | `L` bits                            | bit `l` switches the whole layer               |
//! | MEDIUM | `(h_0, u_0, …, h_{L-1}, u_{L-1})`   | layer `l` keeps its first `h_l` heads / `u_l` units |
//! | LARGE  | `L·(H+U)` bits                      | row `l` of the bits is `[heads | neurons]`      |
//!
//! Any SMALL configuration with a zero coordinate produces the empty mask;
//! [`SearchSpace::canonicalize`] maps all of them to `(0, 0, 0)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::{MaskPair, ModelDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpaceKind {
    Small,
    Layer,
    Medium,
    Large,
}

impl SpaceKind {
    pub const ALL: [SpaceKind; 4] = [SpaceKind::Small, SpaceKind::Layer, SpaceKind::Medium, SpaceKind::Large];

    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceKind::Small => "SMALL",
            SpaceKind::Layer => "LAYER",
            SpaceKind::Medium => "MEDIUM",
            SpaceKind::Large => "LARGE",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SMALL" => Ok(SpaceKind::Small),
            "LAYER" => Ok(SpaceKind::Layer),
            "MEDIUM" => Ok(SpaceKind::Medium),
            "LARGE" => Ok(SpaceKind::Large),
            _ => Err(Error::InvalidConfig(format!("unknown search space `{s}`"))),
        }
    }
}

/// A point in one of the search spaces. Serialises as
/// `{"space": "SMALL", "values": [2, 32, 3]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubNetConfig {
    pub space: SpaceKind,
    pub values: Vec<usize>,
}

impl SubNetConfig {
    pub fn new(space: SpaceKind, values: Vec<usize>) -> Self {
        SubNetConfig { space, values }
    }
}

impl fmt::Display for SubNetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.space, self.values)
    }
}

/// Number of trainable parameters of a sub-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamCount(pub u64);

/// A search-space kind bound to concrete model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchSpace {
    pub kind: SpaceKind,
    pub dims: ModelDims,
}

impl SearchSpace {
    pub fn new(kind: SpaceKind, dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        Ok(SearchSpace { kind, dims })
    }

    /// Number of coordinates of a configuration.
    pub fn dimensionality(&self) -> usize {
        let d = &self.dims;
        match self.kind {
            SpaceKind::Small => 3,
            SpaceKind::Layer => d.layers,
            SpaceKind::Medium => 2 * d.layers,
            SpaceKind::Large => d.layers * (d.heads + d.units),
        }
    }

    /// Inclusive upper bound of coordinate `i`; lower bounds are zero.
    pub fn upper_bound(&self, i: usize) -> usize {
        let d = &self.dims;
        match self.kind {
            SpaceKind::Small => [d.heads, d.units, d.layers][i],
            SpaceKind::Layer | SpaceKind::Large => 1,
            SpaceKind::Medium => {
                if i % 2 == 0 {
                    d.heads
                } else {
                    d.units
                }
            }
        }
    }

    pub fn upper_bounds(&self) -> Vec<usize> {
        (0..self.dimensionality()).map(|i| self.upper_bound(i)).collect()
    }

    /// Number of configurations, if it fits in a `u128`.
    pub fn cardinality(&self) -> Option<u128> {
        self.upper_bounds()
            .iter()
            .try_fold(1u128, |acc, &b| acc.checked_mul(b as u128 + 1))
    }

    pub fn validate(&self, cfg: &SubNetConfig) -> Result<()> {
        if cfg.space != self.kind {
            return Err(Error::InvalidConfig(format!(
                "configuration belongs to {} but the space is {}",
                cfg.space, self.kind
            )));
        }
        if cfg.values.len() != self.dimensionality() {
            return Err(Error::InvalidConfig(format!(
                "{} expects {} coordinates, got {}",
                self.kind,
                self.dimensionality(),
                cfg.values.len()
            )));
        }
        for (i, &v) in cfg.values.iter().enumerate() {
            let hi = self.upper_bound(i);
            if v > hi {
                return Err(Error::InvalidConfig(format!(
                    "{} coordinate {i} = {v} exceeds its bound {hi}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    pub fn min_config(&self) -> SubNetConfig {
        SubNetConfig::new(self.kind, vec![0; self.dimensionality()])
    }

    pub fn max_config(&self) -> SubNetConfig {
        SubNetConfig::new(self.kind, self.upper_bounds())
    }

    /// Maps SMALL configurations with any zero coordinate onto `(0, 0, 0)`,
    /// the single configuration with the empty mask. Identity elsewhere.
    pub fn canonicalize(&self, cfg: &SubNetConfig) -> SubNetConfig {
        if self.kind == SpaceKind::Small && cfg.values.iter().any(|&v| v == 0) {
            self.min_config()
        } else {
            cfg.clone()
        }
    }

    /// The mask pair selected by `cfg`.
    pub fn create_mask(&self, cfg: &SubNetConfig) -> Result<MaskPair> {
        self.validate(cfg)?;
        let d = &self.dims;
        let mut mask = MaskPair::zeros(d);
        let v = &cfg.values;
        match self.kind {
            SpaceKind::Layer => {
                for l in 0..d.layers {
                    let on = v[l] == 1;
                    (0..d.heads).for_each(|i| mask.set_head(l, i, on));
                    (0..d.units).for_each(|j| mask.set_neuron(l, j, on));
                }
            }
            SpaceKind::Medium => {
                for l in 0..d.layers {
                    (0..v[2 * l]).for_each(|i| mask.set_head(l, i, true));
                    (0..v[2 * l + 1]).for_each(|j| mask.set_neuron(l, j, true));
                }
            }
            SpaceKind::Small => {
                let (h, u, layers) = (v[0], v[1], v[2]);
                for l in 0..layers {
                    (0..h).for_each(|i| mask.set_head(l, i, true));
                    (0..u).for_each(|j| mask.set_neuron(l, j, true));
                }
            }
            SpaceKind::Large => {
                let row = d.heads + d.units;
                for l in 0..d.layers {
                    let bits = &v[l * row..(l + 1) * row];
                    (0..d.heads).for_each(|i| mask.set_head(l, i, bits[i] == 1));
                    (0..d.units).for_each(|j| mask.set_neuron(l, j, bits[d.heads + j] == 1));
                }
            }
        }
        Ok(mask)
    }

    /// Active heads and neurons of `cfg`, counted directly from the configuration.
    fn active_counts(&self, cfg: &SubNetConfig) -> (u64, u64) {
        let d = &self.dims;
        let v = &cfg.values;
        match self.kind {
            SpaceKind::Small => {
                let l = v[2] as u64;
                (l * v[0] as u64, l * v[1] as u64)
            }
            SpaceKind::Layer => {
                let on = v.iter().sum::<usize>() as u64;
                (on * d.heads as u64, on * d.units as u64)
            }
            SpaceKind::Medium => {
                let heads = v.iter().step_by(2).sum::<usize>() as u64;
                let units = v.iter().skip(1).step_by(2).sum::<usize>() as u64;
                (heads, units)
            }
            SpaceKind::Large => {
                let row = d.heads + d.units;
                let mut heads = 0u64;
                let mut units = 0u64;
                for (i, &b) in v.iter().enumerate() {
                    if i % row < d.heads {
                        heads += b as u64;
                    } else {
                        units += b as u64;
                    }
                }
                (heads, units)
            }
        }
    }

    /// Trainable parameters of the sub-network: embeddings, layer norms and
    /// classifier always count; each active head adds `4·d_model·d_head`,
    /// each active neuron `2·d_model + 1`.
    pub fn param_count(&self, cfg: &SubNetConfig) -> Result<ParamCount> {
        self.validate(cfg)?;
        let (heads, units) = self.active_counts(cfg);
        let d = &self.dims;
        Ok(ParamCount(d.fixed_params() + heads * d.params_per_head() + units * d.params_per_neuron()))
    }

    /// Uniform sample. SMALL and MEDIUM draw every coordinate independently;
    /// LAYER and LARGE first draw how many bits are set, `k ~ U{0..K}`, then
    /// which `k`, so the parameter count is close to uniform.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> SubNetConfig {
        let dim = self.dimensionality();
        let values = match self.kind {
            SpaceKind::Small | SpaceKind::Medium => (0..dim).map(|i| rng.gen_range(0..=self.upper_bound(i))).collect(),
            SpaceKind::Layer | SpaceKind::Large => {
                let k = rng.gen_range(0..=dim);
                let mut bits = vec![0; dim];
                for i in index::sample(rng, dim, k) {
                    bits[i] = 1;
                }
                bits
            }
        };
        SubNetConfig::new(self.kind, values)
    }

    /// Resamples one uniformly chosen coordinate uniformly over its range.
    /// The new value may coincide with the old one.
    pub fn mutate<R: Rng + ?Sized>(&self, cfg: &SubNetConfig, rng: &mut R) -> Result<SubNetConfig> {
        self.validate(cfg)?;
        let mut out = cfg.clone();
        let d = rng.gen_range(0..self.dimensionality());
        out.values[d] = rng.gen_range(0..=self.upper_bound(d));
        Ok(out)
    }

    /// Coordinates scaled to `[0, 1]` by their ranges.
    pub fn encode_unit(&self, cfg: &SubNetConfig) -> Vec<f64> {
        cfg.values
            .iter()
            .enumerate()
            .map(|(i, &v)| v as f64 / self.upper_bound(i) as f64)
            .collect()
    }

    /// Every configuration in lexicographic order; `None` when the space has
    /// more than `limit` points.
    pub fn enumerate(&self, limit: u128) -> Option<Vec<SubNetConfig>> {
        let size = self.cardinality()?;
        if size > limit {
            return None;
        }
        let bounds = self.upper_bounds();
        let mut cur = vec![0usize; bounds.len()];
        let mut out = Vec::with_capacity(size as usize);
        loop {
            out.push(SubNetConfig::new(self.kind, cur.clone()));
            let mut i = cur.len();
            loop {
                if i == 0 {
                    return Some(out);
                }
                i -= 1;
                if cur[i] < bounds[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(kind: SpaceKind) -> SearchSpace {
        SearchSpace::new(kind, ModelDims::toy()).unwrap()
    }

    #[test]
    fn dimensionality_per_kind() {
        let d = ModelDims::toy();
        assert_eq!(toy(SpaceKind::Small).dimensionality(), 3);
        assert_eq!(toy(SpaceKind::Layer).dimensionality(), d.layers);
        assert_eq!(toy(SpaceKind::Medium).dimensionality(), 2 * d.layers);
        assert_eq!(toy(SpaceKind::Large).dimensionality(), d.layers * (d.heads + d.units));
    }

    #[test]
    fn small_extremes() {
        let s = toy(SpaceKind::Small);
        let d = s.dims;
        assert_eq!(s.max_config().values, vec![d.heads, d.units, d.layers]);
        assert_eq!(s.create_mask(&s.max_config()).unwrap(), MaskPair::ones(&d));
        assert_eq!(s.create_mask(&s.min_config()).unwrap(), MaskPair::zeros(&d));
    }

    #[test]
    fn layer_alternating_rows() {
        let s = toy(SpaceKind::Layer);
        let m = s.create_mask(&SubNetConfig::new(SpaceKind::Layer, vec![1, 0, 1, 0])).unwrap();
        for l in 0..4 {
            let want = (l % 2 == 0) as u8;
            assert!(m.head_row(l).iter().all(|&x| x == want));
            assert!(m.neuron_row(l).iter().all(|&x| x == want));
        }
    }

    #[test]
    fn medium_keeps_first_entries() {
        let s = toy(SpaceKind::Medium);
        let cfg = SubNetConfig::new(SpaceKind::Medium, vec![2, 10, 0, 5, 4, 0, 1, 64]);
        let m = s.create_mask(&cfg).unwrap();
        assert_eq!(m.head_row(0), &[1, 1, 0, 0]);
        assert_eq!(m.neuron_row(1).iter().filter(|&&x| x == 1).count(), 5);
        assert_eq!(m.head_row(1), &[0, 0, 0, 0]);
        assert!(m.neuron_row(3).iter().all(|&x| x == 1));
    }

    #[test]
    fn large_is_row_reshape() {
        let s = toy(SpaceKind::Large);
        let d = s.dims;
        let row = d.heads + d.units;
        let mut v = vec![0; s.dimensionality()];
        v[row + 1] = 1; // layer 1, head 1
        v[2 * row + d.heads + 7] = 1; // layer 2, neuron 7
        let m = s.create_mask(&SubNetConfig::new(SpaceKind::Large, v)).unwrap();
        assert!(m.head(1, 1));
        assert!(m.neuron(2, 7));
        assert_eq!(m.active_heads() + m.active_neurons(), 2);
    }

    #[test]
    fn out_of_range_rejected() {
        let s = toy(SpaceKind::Small);
        assert!(s.create_mask(&SubNetConfig::new(SpaceKind::Small, vec![5, 0, 0])).is_err());
        assert!(s.create_mask(&SubNetConfig::new(SpaceKind::Small, vec![1, 1])).is_err());
        assert!(s.create_mask(&SubNetConfig::new(SpaceKind::Layer, vec![1, 1, 1])).is_err());
        let l = toy(SpaceKind::Layer);
        assert!(l.param_count(&SubNetConfig::new(SpaceKind::Layer, vec![0, 2, 0, 0])).is_err());
    }

    #[test]
    fn param_count_extremes() {
        let s = toy(SpaceKind::Small);
        let d = s.dims;
        assert_eq!(s.param_count(&s.max_config()).unwrap(), ParamCount(35_138));
        assert_eq!(s.param_count(&s.min_config()).unwrap(), ParamCount(d.fixed_params()));
        for kind in SpaceKind::ALL {
            let sp = toy(kind);
            assert!(sp.param_count(&sp.min_config()).unwrap() < sp.param_count(&sp.max_config()).unwrap());
            assert_eq!(sp.param_count(&sp.max_config()).unwrap(), ParamCount(35_138));
        }
    }

    #[test]
    fn canonicalize_small_degenerates() {
        let s = toy(SpaceKind::Small);
        for v in [vec![0, 5, 2], vec![3, 0, 4], vec![2, 9, 0]] {
            let c = s.canonicalize(&SubNetConfig::new(SpaceKind::Small, v));
            assert_eq!(c, s.min_config());
        }
        let keep = SubNetConfig::new(SpaceKind::Small, vec![1, 1, 1]);
        assert_eq!(s.canonicalize(&keep), keep);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        for kind in SpaceKind::ALL {
            let s = toy(kind);
            let a: Vec<_> = {
                let mut r = ChaCha8Rng::seed_from_u64(11);
                (0..20).map(|_| s.sample_uniform(&mut r)).collect()
            };
            let b: Vec<_> = {
                let mut r = ChaCha8Rng::seed_from_u64(11);
                (0..20).map(|_| s.sample_uniform(&mut r)).collect()
            };
            assert_eq!(a, b);
            a.iter().for_each(|c| s.validate(c).unwrap());
        }
    }

    #[test]
    fn mutate_changes_at_most_one_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in SpaceKind::ALL {
            let s = toy(kind);
            for _ in 0..200 {
                let c = s.sample_uniform(&mut rng);
                let m = s.mutate(&c, &mut rng).unwrap();
                s.validate(&m).unwrap();
                let diff = c.values.iter().zip(&m.values).filter(|(a, b)| a != b).count();
                assert!(diff <= 1);
            }
        }
    }

    #[test]
    fn enumerate_layer_space() {
        let s = SearchSpace::new(SpaceKind::Layer, ModelDims { layers: 3, ..ModelDims::toy() }).unwrap();
        let all = s.enumerate(1000).unwrap();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].values, vec![0, 0, 0]);
        assert_eq!(all[7].values, vec![1, 1, 1]);
        assert!(toy(SpaceKind::Large).enumerate(1 << 20).is_none());
    }

    #[test]
    fn config_json_shape() {
        let c = SubNetConfig::new(SpaceKind::Small, vec![2, 32, 3]);
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"space":"SMALL","values":[2,32,3]}"#);
    }
}
