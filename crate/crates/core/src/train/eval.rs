use crate::data::observed_len;
use crate::error::{Error, Result};
use crate::model::{argmax, FlVae, HeadKind, Prepared};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRow {
    pub variant: String,
    pub ratio: f64,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseRow {
    pub variant: String,
    pub head: HeadKind,
    pub ratio: f64,
    pub mse: f64,
    pub n: usize,
}

fn check_ratios(data: &[Prepared], ratios: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::param("evaluate", "empty dataset"));
    }
    for &r in ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::param("evaluate", format!("ratio {} outside (0, 1]", r)));
        }
        if let Some(s) = data.iter().find(|s| observed_len(r, s.frames()) < 2) {
            return Err(Error::param(
                "evaluate",
                format!("ratio {} leaves fewer than 2 frames of clip {}", r, s.id),
            ));
        }
    }
    Ok(())
}

/// Class probabilities averaged over `draws` latent resamples; draw `k`
/// of clip `id` uses a seed derived from `(seed, id, k)`.
pub fn predict_probs(model: &FlVae, sample: &Prepared, ratio: f64, seed: u64, draws: usize) -> Result<Vec<f64>> {
    let mut avg = vec![0.0; model.config.n_classes];
    let n = draws.max(1);
    for k in 0..n {
        let s = rng::derive(seed, &[rng::hash_str(&sample.id), k as u64]);
        let (_, p) = model.predict_prepared(sample, ratio, s)?;
        for (a, v) in avg.iter_mut().zip(p.data()) {
            *a += v / n as f64;
        }
    }
    Ok(avg)
}

/// Held-out accuracy at each observation ratio.
pub fn evaluate_accuracy(
    model: &FlVae,
    data: &[Prepared],
    ratios: &[f64],
    seed: u64,
    draws: usize,
    variant: &str,
) -> Result<Vec<AccuracyRow>> {
    check_ratios(data, ratios)?;
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut correct = 0;
        let mut n = 0;
        for s in data {
            let Some(label) = s.label else { continue };
            let probs = predict_probs(model, s, ratio, seed, draws)?;
            correct += usize::from(argmax(&probs) == label);
            n += 1;
        }
        if n == 0 {
            return Err(Error::param("evaluate", "no labelled clips"));
        }
        rows.push(AccuracyRow { variant: variant.to_string(), ratio, accuracy: correct as f64 / n as f64, n });
    }
    Ok(rows)
}

/// Mean per-head reconstruction MSE over `data` after observing
/// `⌊ratio·T⌋` frames, with the latent resampled under a fixed seed.
pub fn evaluate_head_mse(model: &FlVae, data: &[Prepared], ratio: f64, seed: u64, variant: &str) -> Result<Vec<MseRow>> {
    check_ratios(data, &[ratio])?;
    let mut rows = Vec::new();
    for &head in &model.config.heads {
        let mut total = 0.0;
        for s in data {
            let t = observed_len(ratio, s.frames());
            let target = s.target(head, t)?;
            let flow = s.observed_flow(t)?;
            let code = model.encode(&s.observed_rgb(t)?, Some(&flow), rng::derive(seed, &[rng::hash_str(&s.id)]))?;
            let part = match model.config.part_for(head) {
                crate::model::LatentPart::Z1 => code.z1(),
                crate::model::LatentPart::Z2 => code.z2(),
            };
            let pred = model.decode(head, &part)?;
            let d: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            total += d / pred.len() as f64;
        }
        rows.push(MseRow { variant: variant.to_string(), head, ratio, mse: total / data.len() as f64, n: data.len() });
    }
    Ok(rows)
}
