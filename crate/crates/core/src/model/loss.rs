use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

use super::config::HeadKind;

/// Weights of the reconstruction, KL and L2 terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambdas {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

/// Element count of one default RGB target frame (3·24·24). As `λ1` it
/// turns the per-element mean reconstruction error back into a per-frame
/// sum of squares.
pub const FRAME_ELEMENTS: f64 = 1728.0;

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas { l1: FRAME_ELEMENTS, l2: 0.1, l3: 0.001 }
    }
}

/// Scalar values of every loss term for one objective evaluation.
///
/// In the pretraining stage `total == lambda1*l_r + lambda2*l_vae + lambda3*l_l2`
/// evaluated left to right. In the classification stage `l_cla` is set and
/// `total == l_cla + lambda3*l_l2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_r: f64,
    pub l_vae: f64,
    pub l_l2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub total: f64,
    pub l_cla: Option<f64>,
    pub per_head: Vec<(HeadKind, f64)>,
}

impl LossBreakdown {
    /// Recomputes the total from the parts.
    pub fn recombined(&self) -> f64 {
        match self.l_cla {
            Some(c) => c + self.lambda3 * self.l_l2,
            None => self.lambda1 * self.l_r + self.lambda2 * self.l_vae + self.lambda3 * self.l_l2,
        }
    }

    /// Element-wise mean of several breakdowns (used for batch logging).
    pub fn mean(items: &[LossBreakdown]) -> Option<LossBreakdown> {
        let first = items.first()?;
        let n = items.len() as f64;
        let avg = |f: &dyn Fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(LossBreakdown {
            l_r: avg(&|b| b.l_r),
            l_vae: avg(&|b| b.l_vae),
            l_l2: avg(&|b| b.l_l2),
            lambda1: first.lambda1,
            lambda2: first.lambda2,
            lambda3: first.lambda3,
            total: avg(&|b| b.total),
            l_cla: first.l_cla.map(|_| avg(&|b| b.l_cla.unwrap_or(0.0))),
            per_head: first
                .per_head
                .iter()
                .enumerate()
                .map(|(i, (h, _))| (*h, avg(&|b| b.per_head.get(i).map_or(0.0, |p| p.1))))
                .collect(),
        })
    }
}

/// Builds `λ1·Σ_heads MSE + λ2·KL + λ3·L2` on the tape.
///
/// `heads` holds `(head, prediction, target)` triples; the decoders only enter
/// through them, so any function of the latent can stand in for a decoder.
pub fn assemble_pretrain_loss<'t>(
    tape: &'t Tape,
    mean: Var<'t>,
    logvar: Var<'t>,
    heads: &[(HeadKind, Var<'t>, Var<'t>)],
    l2: Var<'t>,
    lambdas: Lambdas,
) -> Result<(Var<'t>, LossBreakdown)> {
    let Some((first, rest)) = heads.split_first() else {
        return Err(Error::param("pretrain loss", "at least one decoder head is required"));
    };
    let mut per_head = Vec::with_capacity(heads.len());
    let mut l_r = tape.mse(first.1, first.2)?;
    per_head.push((first.0, l_r.item()));
    for (head, pred, target) in rest {
        let m = tape.mse(*pred, *target)?;
        per_head.push((*head, m.item()));
        l_r = tape.add(l_r, m)?;
    }
    let kl = tape.kl_std_normal(mean, logvar)?;
    let total = tape.add(tape.add(tape.scale(l_r, lambdas.l1), tape.scale(kl, lambdas.l2))?, tape.scale(l2, lambdas.l3))?;
    let breakdown = LossBreakdown {
        l_r: l_r.item(),
        l_vae: kl.item(),
        l_l2: l2.item(),
        lambda1: lambdas.l1,
        lambda2: lambdas.l2,
        lambda3: lambdas.l3,
        total: total.item(),
        l_cla: None,
        per_head,
    };
    Ok((total, breakdown))
}
