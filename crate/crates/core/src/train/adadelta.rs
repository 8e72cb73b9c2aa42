use crate::error::{Error, Result};
use crate::model::ParameterSet;

/// Decay, stabilizer and learning rate of the Adadelta update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig { rho: 0.95, eps: 1e-6, lr: 1.0 }
    }
}

/// Per-parameter accumulators `E[g²]` and `E[Δx²]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdadeltaState {
    pub config: AdadeltaConfig,
    pub grad_sq: ParameterSet,
    pub update_sq: ParameterSet,
}

const GRAD_SQ: &str = "#grad_sq";
const UPDATE_SQ: &str = "#update_sq";

impl AdadeltaState {
    pub fn new(params: &ParameterSet, config: AdadeltaConfig) -> Self {
        AdadeltaState { config, grad_sq: params.zeros_like(), update_sq: params.zeros_like() }
    }

    /// Flattens both accumulators into one named set for checkpointing.
    pub fn to_set(&self) -> ParameterSet {
        let mut out = ParameterSet::new();
        for (n, t) in self.grad_sq.iter() {
            out.insert(format!("{n}{GRAD_SQ}"), t.clone());
        }
        for (n, t) in self.update_sq.iter() {
            out.insert(format!("{n}{UPDATE_SQ}"), t.clone());
        }
        out
    }

    /// Inverse of [`to_set`](Self::to_set); every parameter must have both
    /// accumulators with matching shapes.
    pub fn from_set(set: &ParameterSet, params: &ParameterSet, config: AdadeltaConfig) -> Result<Self> {
        let mut s = AdadeltaState::new(params, config);
        for (name, p) in params.iter() {
            for (suffix, dst) in [(GRAD_SQ, &mut s.grad_sq), (UPDATE_SQ, &mut s.update_sq)] {
                let key = format!("{name}{suffix}");
                let t = set.require(&key)?;
                if t.shape() != p.shape() {
                    return Err(Error::dim("adadelta state", format!("{} has shape {:?}", key, t.shape())));
                }
                *dst.get_mut(name).expect("zeros_like covers every name") = t.clone();
            }
        }
        if set.len() != 2 * params.len() {
            return Err(Error::Config(format!("optimizer state has {} entries for {} parameters", set.len(), params.len())));
        }
        Ok(s)
    }
}

/// One Adadelta update of every parameter named in `grads`; parameters
/// without a gradient entry are left untouched.
pub fn adadelta_step(params: &mut ParameterSet, grads: &ParameterSet, state: &mut AdadeltaState) -> Result<()> {
    let AdadeltaConfig { rho, eps, lr } = state.config;
    for (name, g) in grads.iter() {
        let p = params.get_mut(name).ok_or_else(|| Error::Config(format!("gradient for unknown parameter {}", name)))?;
        let eg = state.grad_sq.get_mut(name).ok_or_else(|| Error::Config(format!("no optimizer state for {}", name)))?;
        let ex = state.update_sq.get_mut(name).expect("state sets share names");
        if g.shape() != p.shape() {
            return Err(Error::dim("adadelta_step", format!("{}: grad {:?} vs param {:?}", name, g.shape(), p.shape())));
        }
        for i in 0..g.len() {
            let gi = g.data()[i];
            let a = rho * eg.data()[i] + (1.0 - rho) * gi * gi;
            eg.data_mut()[i] = a;
            let dx = -((ex.data()[i] + eps).sqrt() / (a + eps).sqrt()) * gi;
            ex.data_mut()[i] = rho * ex.data()[i] + (1.0 - rho) * dx * dx;
            p.data_mut()[i] += lr * dx;
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm {
        let c = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            t.scale_assign(c);
        }
    }
    norm
}
