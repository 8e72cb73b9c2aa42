use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use super::adadelta::{adadelta_step, clip_global_norm, AdadeltaConfig, AdadeltaState};
use crate::autodiff::{Tape, Var};
use crate::data::observed_len;
use crate::error::{Error, Result};
use crate::model::{
    head_prefix, is_classifier_param, is_encoder_param, FlVae, Lambdas, LossBreakdown, ParamVars, ParameterSet, Pass,
    Prepared,
};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Classify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Classify => "classify",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambdas: Lambdas,
    pub freeze_encoder: bool,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Observation ratios drawn uniformly for each classification sample.
    pub train_ratios: Vec<f64>,
    pub optimizer: AdadeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            lambdas: Lambdas::default(),
            freeze_encoder: false,
            seed: 0,
            clip_norm: Some(10.0),
            train_ratios: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            optimizer: AdadeltaConfig::default(),
        }
    }
}

/// Mean loss terms over one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    /// Optimizer steps taken so far in this stage.
    pub step: usize,
    pub loss: LossBreakdown,
}

/// One sample's contribution to a batch: which clip and how much of it is observed.
#[derive(Clone, Copy, Debug)]
struct Draw {
    index: usize,
    observed: usize,
    pass: Pass,
}

fn check_dataset(model: &FlVae, data: &[Prepared], stage: Stage, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::param(stage.name(), "empty dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    for s in data {
        match stage {
            Stage::Pretrain => {
                let need = 2 + model.config.max_frames_ahead();
                if s.frames() < need {
                    return Err(Error::param(
                        "pretrain",
                        format!("clip {} has {} frames, active heads need {}", s.id, s.frames(), need),
                    ));
                }
            }
            Stage::Classify => {
                let label = s.label.ok_or_else(|| Error::param("classify", format!("clip {} has no label", s.id)))?;
                if label >= model.config.n_classes {
                    return Err(Error::param(
                        "classify",
                        format!("label {} of clip {} with {} classes", label, s.id, model.config.n_classes),
                    ));
                }
                for &r in &cfg.train_ratios {
                    if !(r > 0.0 && r <= 1.0) || observed_len(r, s.frames()) < 2 {
                        return Err(Error::param("classify", format!("training ratio {} on {} frames", r, s.frames())));
                    }
                }
            }
        }
    }
    if stage == Stage::Classify && cfg.train_ratios.is_empty() {
        return Err(Error::Config("no training ratios".into()));
    }
    Ok(())
}

fn draws_for_epoch(model: &FlVae, data: &[Prepared], stage: Stage, cfg: &TrainConfig, epoch: usize) -> Vec<Draw> {
    let tag = stage as u64 + 1;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::rng(cfg.seed, &[tag, epoch as u64, 0x0D]));
    order
        .into_iter()
        .enumerate()
        .map(|(pos, index)| {
            let mut r = rng::rng(cfg.seed, &[tag, epoch as u64, pos as u64]);
            let frames = data[index].frames();
            let observed = match stage {
                Stage::Pretrain => r.random_range(2..=frames - model.config.max_frames_ahead()),
                Stage::Classify => observed_len(cfg.train_ratios[r.random_range(0..cfg.train_ratios.len())], frames),
            };
            Draw { index, observed, pass: Pass::train(r.random()) }
        })
        .collect()
}

fn trainable(model: &FlVae, stage: Stage, freeze_encoder: bool) -> impl Fn(&str) -> bool + '_ {
    move |name: &str| {
        if is_encoder_param(name) {
            return !freeze_encoder;
        }
        match stage {
            Stage::Pretrain => model.config.heads.iter().any(|h| name.starts_with(&head_prefix(*h))),
            Stage::Classify => is_classifier_param(name),
        }
    }
}

/// Gradient of the mean objective over `batch`, summed in batch order.
fn batch_gradient(
    model: &FlVae,
    data: &[Prepared],
    batch: &[Draw],
    stage: Stage,
    cfg: &TrainConfig,
) -> Result<(ParameterSet, Vec<LossBreakdown>)> {
    let is_trainable = trainable(model, stage, cfg.freeze_encoder);
    let mut acc = ParameterSet::new();
    for (name, t) in model.params.iter() {
        if is_trainable(name) {
            acc.insert(name, crate::Tensor::zeros(t.shape()));
        }
    }
    let mut parts = Vec::with_capacity(batch.len());
    for d in batch {
        let tape = Tape::new();
        let pv = model.params.bind(&tape, &is_trainable);
        let sample = &data[d.index];
        let (loss, bd): (Var<'_>, LossBreakdown) = match stage {
            Stage::Pretrain => model.pretrain_objective(&tape, &pv, sample, d.observed, cfg.lambdas, d.pass)?,
            Stage::Classify => {
                model.classify_objective(&tape, &pv, sample, d.observed, cfg.lambdas.l3, !cfg.freeze_encoder, d.pass)?
            }
        };
        let grads = tape.backward(loss)?;
        accumulate(&mut acc, &pv, &grads);
        parts.push(bd);
    }
    let inv = 1.0 / batch.len() as f64;
    for (_, t) in acc.iter_mut() {
        t.scale_assign(inv);
    }
    Ok((acc, parts))
}

fn accumulate(acc: &mut ParameterSet, pv: &ParamVars<'_>, grads: &crate::autodiff::Gradients) {
    for (name, v) in pv.iter() {
        if let (Some(dst), Some(g)) = (acc.get_mut(name), grads.get(v)) {
            dst.add_assign(g);
        }
    }
}

/// Runs `epochs` of `stage` on `data`, updating `model` and `opt` in place.
/// Every random choice is keyed by `(seed, stage, epoch, position)`, so
/// running epochs `0..k` then `k..n` equals running `0..n` in one go.
pub fn run_epochs(
    model: &mut FlVae,
    opt: &mut AdadeltaState,
    data: &[Prepared],
    stage: Stage,
    cfg: &TrainConfig,
    epochs: Range<usize>,
) -> Result<Vec<EpochLog>> {
    check_dataset(model, data, stage, cfg)?;
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let mut logs = Vec::new();
    for epoch in epochs {
        let draws = draws_for_epoch(model, data, stage, cfg, epoch);
        let mut parts = Vec::with_capacity(draws.len());
        for batch in draws.chunks(cfg.batch_size) {
            let (mut grads, bds) = batch_gradient(model, data, batch, stage, cfg)?;
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            adadelta_step(&mut model.params, &grads, opt)?;
            parts.extend(bds);
        }
        let loss = LossBreakdown::mean(&parts).expect("non-empty epoch");
        if !loss.total.is_finite() {
            return Err(Error::param(stage.name(), format!("loss became non-finite at epoch {}", epoch)));
        }
        logs.push(EpochLog { stage, epoch, step: (epoch + 1) * per_epoch, loss });
    }
    Ok(logs)
}

/// Fresh optimizer state for `model`.
pub fn new_optimizer(model: &FlVae, cfg: &TrainConfig) -> AdadeltaState {
    AdadeltaState::new(&model.params, cfg.optimizer)
}

/// Decoder pretraining for `cfg.epochs` epochs from a fresh optimizer.
pub fn pretrain(model: &mut FlVae, data: &[Prepared], cfg: &TrainConfig) -> Result<(AdadeltaState, Vec<EpochLog>)> {
    let mut opt = new_optimizer(model, cfg);
    let logs = run_epochs(model, &mut opt, data, Stage::Pretrain, cfg, 0..cfg.epochs)?;
    Ok((opt, logs))
}

/// Classifier training for `cfg.epochs` epochs from a fresh optimizer.
pub fn train_classifier(model: &mut FlVae, data: &[Prepared], cfg: &TrainConfig) -> Result<(AdadeltaState, Vec<EpochLog>)> {
    let mut opt = new_optimizer(model, cfg);
    let logs = run_epochs(model, &mut opt, data, Stage::Classify, cfg, 0..cfg.epochs)?;
    Ok((opt, logs))
}

/// Evaluates the objective on fixed draws without updating anything.
/// Used to compare losses before and after training on the same data.
pub fn fixed_loss(model: &FlVae, data: &[Prepared], stage: Stage, cfg: &TrainConfig) -> Result<f64> {
    check_dataset(model, data, stage, cfg)?;
    let draws = draws_for_epoch(model, data, stage, cfg, usize::MAX);
    let (_, parts) = batch_gradient(model, data, &draws, stage, cfg)?;
    Ok(LossBreakdown::mean(&parts).expect("non-empty").total)
}
