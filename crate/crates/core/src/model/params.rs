use indexmap::IndexMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named trainable tensors in a stable insertion order.
///
/// Names ending in `.weight` are weights (subject to the L2 penalty);
/// everything else is a bias.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    tensors: IndexMap<String, Tensor>,
}

pub fn is_weight(name: &str) -> bool {
    name.ends_with(".weight")
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Config(format!("missing parameter {}", name)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> ParameterSet {
        ParameterSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect(),
        }
    }

    /// `½ Σ w²` over weights only.
    pub fn l2_value(&self) -> f64 {
        self.iter().filter(|(n, _)| is_weight(n)).map(|(_, t)| 0.5 * t.sum_squares()).sum()
    }

    /// Places every tensor on `tape`; `trainable` decides which ones
    /// receive gradients.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: impl Fn(&str) -> bool) -> ParamVars<'t> {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable(k))))
                .collect(),
        }
    }
}

/// A [`ParameterSet`] bound to a tape.
pub struct ParamVars<'t> {
    vars: IndexMap<String, Var<'t>>,
}

impl<'t> ParamVars<'t> {
    /// Pairs names with vars already on a tape.
    pub fn from_vars(pairs: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        ParamVars { vars: pairs.into_iter().collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars.get(name).copied().ok_or_else(|| Error::Config(format!("missing parameter {}", name)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> + '_ {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// `½ ‖w‖²` summed over every weight tensor on the tape.
pub fn l2_penalty<'t>(tape: &'t Tape, params: &ParamVars<'t>) -> Result<Var<'t>> {
    l2_penalty_where(tape, params, |_| true)
}

/// Like [`l2_penalty`] but only over weights whose name passes `keep`.
pub fn l2_penalty_where<'t>(tape: &'t Tape, params: &ParamVars<'t>, keep: impl Fn(&str) -> bool) -> Result<Var<'t>> {
    let mut acc = tape.constant(Tensor::scalar(0.0));
    for (name, v) in params.iter() {
        if is_weight(name) && keep(name) {
            acc = tape.add(acc, tape.half_sum_squares(v))?;
        }
    }
    Ok(acc)
}
