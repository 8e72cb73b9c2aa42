use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{is_weight, FlVae, ModelConfig, ParameterSet};
use crate::rng;
use crate::tensor::Tensor;
use crate::error::Result;

pub const WEIGHT_STD: f64 = 0.1;
pub const BIAS_STD: f64 = 0.01;

/// `N(0, std²)` resampled until the draw lies within two standard deviations.
pub fn truncated_normal(r: &mut impl Rng, std: f64) -> f64 {
    let n = Normal::new(0.0, std).expect("positive std");
    loop {
        let x: f64 = n.sample(r);
        if x.abs() <= 2.0 * std {
            return x;
        }
    }
}

/// Fresh parameters for `config`. Each tensor draws from its own stream
/// keyed by name, so adding a head never changes the others.
pub fn init_params(config: &ModelConfig, seed: u64) -> ParameterSet {
    let mut out = ParameterSet::new();
    for (name, shape) in FlVae::param_shapes(config) {
        let std = if is_weight(&name) { WEIGHT_STD } else { BIAS_STD };
        let mut r = rng::rng(seed, &[rng::hash_str(&name)]);
        out.insert(name, Tensor::from_fn(shape, |_| truncated_normal(&mut r, std)));
    }
    out
}

pub fn init_model(config: ModelConfig, seed: u64) -> Result<FlVae> {
    let params = init_params(&config, seed);
    FlVae::new(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_determinism() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, 3);
        assert_eq!(a, init_params(&cfg, 3));
        assert_ne!(a, init_params(&cfg, 4));
        for (name, t) in a.iter() {
            let bound = if is_weight(name) { 0.2 } else { 0.02 };
            assert!(t.max_abs() <= bound, "{name}");
        }
        FlVae::new(cfg, a).unwrap();
    }
}
