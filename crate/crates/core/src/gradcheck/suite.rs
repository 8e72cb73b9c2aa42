//! Finite-difference checks for every differentiable tape operation and for
//! the full pretraining loss of a small model.

use rand::Rng;

use super::{grad_check_tampered, grad_check_with, GradCheck, Stencil};
use crate::autodiff::{ConvGeom, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{
    is_weight, DeconvLayer, EncoderMode, FlVae, HeadKind, Lambdas, ModelConfig, ParamVars, ParameterSet, Pass,
    Prepared,
};
use crate::rng;
use crate::tensor::Tensor;

/// Names accepted by [`check_op`], in suite order.
pub const OPS: &[&str] = &[
    "add",
    "scale",
    "sum",
    "half_sum_squares",
    "reshape",
    "conv3d",
    "deconv3d",
    "affine",
    "relu",
    "sigmoid",
    "dropout",
    "spp_pool",
    "concat",
    "narrow",
    "clamp",
    "softmax",
    "cross_entropy",
    "mse",
    "kl_std_normal",
    "reparameterize",
    "l2_penalty",
    "composite",
];

pub const DEFAULT_EPS: f64 = 1e-5;

/// Step for the extrapolated differences of the composite check. Smaller
/// steps drown gradient components near 1e-9 in rounding error.
pub const COMPOSITE_EPS: f64 = 3e-4;

/// Factor applied to the first analytic gradient component when a check is
/// deliberately corrupted.
pub const CORRUPTION: f64 = 1.01;

#[derive(Clone, Debug)]
pub struct OpReport {
    pub op: String,
    pub seeds: usize,
    pub max_rel_err: f64,
    pub worst_seed: u64,
    /// Probed components across all seeds, and those skipped at a kink.
    pub checked: usize,
    pub skipped: usize,
    pub passed: bool,
}

fn uniform(r: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

/// Values at least `gap` away from zero, either sign.
fn off_zero(r: &mut impl Rng, shape: &[usize], gap: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = r.random_range(gap..1.0);
        if r.random::<bool>() { m } else { -m }
    })
}

/// Reduces any output to a scalar through fixed random weights, so every
/// output element contributes a distinct amount to the loss.
fn project<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let n = y.value().len();
    let flat = tape.reshape(y, [n])?;
    let w = tape.constant(rng::normal_vec(rng::derive(seed, &[0x9E]), n).reshape([1, n])?);
    let b = tape.constant(Tensor::zeros([1]));
    Ok(tape.sum(tape.affine(flat, w, b)?))
}

/// Configuration of the small model used by the `composite` check: 16×16
/// input, two-channel layers and all four decoder heads.
pub fn composite_config() -> ModelConfig {
    let mut c = ModelConfig::default();
    for l in &mut c.encoder.layers {
        l.out_channels = 2;
    }
    c.encoder.mode = EncoderMode::RgbFlow;
    c.decoder.seed_channels = 2;
    for l in &mut c.decoder.layers {
        l.out_channels = 2;
    }
    let last = c.decoder.layers.len() - 1;
    c.decoder.layers[last] = DeconvLayer { out_channels: 0, ..c.decoder.layers[last] };
    c.heads = HeadKind::ALL.to_vec();
    c.frame_h = 16;
    c.frame_w = 16;
    c
}

/// Parameters for the composite check. Weights are scaled by fan-in and
/// biases are positive, so activations stay of order one through every
/// layer and few units sit near a relu boundary.
pub fn composite_params(config: &ModelConfig, seed: u64) -> ParameterSet {
    let mut out = ParameterSet::new();
    for (name, shape) in FlVae::param_shapes(config) {
        let mut r = rng::rng(seed, &[0xAB, rng::hash_str(&name)]);
        let t = if is_weight(&name) {
            // transposed kernels spread each input over stride² outputs
            let fan: usize = if name.contains("deconv") {
                shape[0] * shape[2..].iter().product::<usize>() / 4
            } else {
                shape[1..].iter().product()
            };
            let bound = (6.0 / fan.max(1) as f64).sqrt();
            uniform(&mut r, &shape, -bound, bound)
        } else {
            uniform(&mut r, &shape, 0.3, 0.8)
        };
        out.insert(name, t);
    }
    out
}

/// Runs the named check at one seed. With `corrupt` set the first analytic
/// gradient component is scaled by [`CORRUPTION`] before comparison.
pub fn check_op(op: &str, seed: u64, corrupt: bool) -> Result<GradCheck> {
    let mut r = rng::rng(seed, &[rng::hash_str(op)]);
    let tamper = |g: &mut [Tensor]| {
        if corrupt {
            if let Some(t) = g.iter_mut().find(|t| !t.is_empty()) {
                let d = t.data_mut();
                // keep a zero component from hiding the corruption
                d[0] = if d[0] == 0.0 { 1e-3 } else { d[0] * CORRUPTION };
            }
        }
    };
    let eps = DEFAULT_EPS;
    let ps = seed;
    match op {
        "add" => {
            let x = [uniform(&mut r, &[3, 4], -1.0, 1.0), uniform(&mut r, &[3, 4], -1.0, 1.0)];
            grad_check_tampered(|t, v| project(t, t.add(v[0], v[1])?, ps), &x, eps, tamper)
        }
        "scale" => {
            let c = r.random_range(-2.0..2.0);
            let x = [uniform(&mut r, &[5], -1.0, 1.0)];
            grad_check_tampered(|t, v| project(t, t.scale(v[0], c), ps), &x, eps, tamper)
        }
        "sum" => {
            let x = [uniform(&mut r, &[2, 3], -1.0, 1.0)];
            grad_check_tampered(|t, v| Ok(t.sum(v[0])), &x, eps, tamper)
        }
        "half_sum_squares" => {
            let x = [uniform(&mut r, &[2, 3, 2], -1.0, 1.0)];
            grad_check_tampered(|t, v| Ok(t.half_sum_squares(v[0])), &x, eps, tamper)
        }
        "reshape" => {
            let x = [uniform(&mut r, &[2, 6], -1.0, 1.0)];
            grad_check_tampered(|t, v| project(t, t.reshape(v[0], [3, 4])?, ps), &x, eps, tamper)
        }
        "conv3d" => {
            let geom = ConvGeom::new([1, 2, 1], [1, 0, 1]);
            let x = [
                uniform(&mut r, &[2, 3, 5, 4], -1.0, 1.0),
                uniform(&mut r, &[3, 2, 2, 3, 3], -0.5, 0.5),
                uniform(&mut r, &[3], -0.1, 0.1),
            ];
            grad_check_tampered(|t, v| project(t, t.conv3d(v[0], v[1], v[2], geom)?, ps), &x, eps, tamper)
        }
        "deconv3d" => {
            let geom = ConvGeom::new([1, 2, 2], [0, 1, 1]);
            let x = [
                uniform(&mut r, &[2, 2, 3, 3], -1.0, 1.0),
                uniform(&mut r, &[2, 3, 1, 4, 4], -0.5, 0.5),
                uniform(&mut r, &[3], -0.1, 0.1),
            ];
            grad_check_tampered(
                |t, v| project(t, t.deconv3d(v[0], v[1], v[2], geom, [2, 6, 6])?, ps),
                &x,
                eps,
                tamper,
            )
        }
        "affine" => {
            let x = [
                uniform(&mut r, &[5], -1.0, 1.0),
                uniform(&mut r, &[4, 5], -1.0, 1.0),
                uniform(&mut r, &[4], -1.0, 1.0),
            ];
            grad_check_tampered(|t, v| project(t, t.affine(v[0], v[1], v[2])?, ps), &x, eps, tamper)
        }
        "relu" => {
            let x = [off_zero(&mut r, &[10], 1e-3)];
            grad_check_tampered(|t, v| project(t, t.relu(v[0]), ps), &x, eps, tamper)
        }
        "sigmoid" => {
            let x = [uniform(&mut r, &[8], -4.0, 4.0)];
            grad_check_tampered(|t, v| project(t, t.sigmoid(v[0]), ps), &x, eps, tamper)
        }
        "dropout" => {
            let x = [uniform(&mut r, &[12], -1.0, 1.0)];
            let mask_seed = rng::derive(seed, &[0xD0]);
            grad_check_tampered(|t, v| project(t, t.dropout(v[0], 0.7, mask_seed, true)?, ps), &x, eps, tamper)
        }
        "spp_pool" => {
            // distinct values spaced well beyond eps keep the argmax fixed
            let n = 2 * 2 * 5 * 6;
            let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
            for i in (1..n).rev() {
                vals.swap(i, r.random_range(0..=i));
            }
            let x = [Tensor::new([2, 2, 5, 6], vals)?];
            grad_check_tampered(|t, v| project(t, t.spp_pool(v[0], &[4, 2, 1])?, ps), &x, eps, tamper)
        }
        "concat" => {
            let x = [uniform(&mut r, &[2, 3, 2], -1.0, 1.0), uniform(&mut r, &[2, 1, 2], -1.0, 1.0)];
            grad_check_tampered(|t, v| project(t, t.concat(v[0], v[1], 1)?, ps), &x, eps, tamper)
        }
        "narrow" => {
            let x = [uniform(&mut r, &[9], -1.0, 1.0)];
            grad_check_tampered(|t, v| project(t, t.narrow(v[0], 2, 5)?, ps), &x, eps, tamper)
        }
        "clamp" => {
            // inside, below and above the bounds, never within 1e-3 of them
            let x = [Tensor::from_fn([9], |i| {
                let m = r.random_range(1e-3..0.5);
                match i % 3 {
                    0 => r.random_range(-0.499..0.499),
                    1 => -0.5 - m,
                    _ => 0.5 + m,
                }
            })];
            grad_check_tampered(|t, v| project(t, t.clamp(v[0], -0.5, 0.5), ps), &x, eps, tamper)
        }
        "softmax" => {
            let x = [uniform(&mut r, &[6], -2.0, 2.0)];
            grad_check_tampered(|t, v| project(t, t.softmax(v[0])?, ps), &x, eps, tamper)
        }
        "cross_entropy" => {
            let label = r.random_range(0..6);
            let x = [uniform(&mut r, &[6], -2.0, 2.0)];
            grad_check_tampered(|t, v| t.cross_entropy(t.softmax(v[0])?, label), &x, eps, tamper)
        }
        "mse" => {
            let x = [uniform(&mut r, &[3, 4], 0.0, 1.0), uniform(&mut r, &[3, 4], 0.0, 1.0)];
            grad_check_tampered(|t, v| t.mse(v[0], v[1]), &x, eps, tamper)
        }
        "kl_std_normal" => {
            let x = [uniform(&mut r, &[6], -1.5, 1.5), uniform(&mut r, &[6], -2.0, 2.0)];
            grad_check_tampered(|t, v| t.kl_std_normal(v[0], v[1]), &x, eps, tamper)
        }
        "reparameterize" => {
            let noise = rng::normal_vec(rng::derive(seed, &[0xE5]), 6);
            let x = [uniform(&mut r, &[6], -1.5, 1.5), uniform(&mut r, &[6], -2.0, 2.0)];
            grad_check_tampered(
                |t, v| project(t, t.reparameterize(v[0], v[1], noise.clone())?, ps),
                &x,
                eps,
                tamper,
            )
        }
        "l2_penalty" => {
            let x = [uniform(&mut r, &[3, 2], -1.0, 1.0), uniform(&mut r, &[3], -1.0, 1.0)];
            let names = ["layer.weight".to_string(), "layer.bias".to_string()];
            grad_check_tampered(
                |t, v| {
                    let pv = ParamVars::from_vars(names.iter().cloned().zip(v.iter().copied()));
                    crate::model::l2_penalty(t, &pv)
                },
                &x,
                eps,
                tamper,
            )
        }
        "composite" => check_composite(seed, tamper),
        other => Err(Error::Config(format!("unknown gradient-check op {:?}; expected one of {:?}", other, OPS))),
    }
}

/// Smallest distance of any relu input from zero in a composite case.
pub const COMPOSITE_RELU_MARGIN: f64 = 3e-3;

/// Parameters and clip for the composite check at `seed`. Draws are repeated
/// until no relu input lies within [`COMPOSITE_RELU_MARGIN`] of its kink,
/// the same precaution the elementary relu check takes with its inputs.
pub fn composite_case(seed: u64) -> Result<(ParameterSet, Prepared)> {
    let config = composite_config();
    for attempt in 0u64.. {
        let s = rng::derive(seed, &[0xCA, attempt]);
        let params = composite_params(&config, s);
        let mut r = rng::rng(s, &[0xC0]);
        let sample = Prepared {
            id: "toy".into(),
            label: Some(0),
            rgb: uniform(&mut r, &[3, 6, 16, 16], 0.0, 1.0),
            flow: uniform(&mut r, &[2, 5, 16, 16], 0.0, 1.0),
        };
        let model = FlVae::new(config.clone(), params.clone())?;
        let tape = Tape::new();
        let pv = params.bind(&tape, |_| false);
        model.pretrain_objective(&tape, &pv, &sample, 2, composite_lambdas(), Pass::train(seed))?;
        if tape.relu_margin() >= COMPOSITE_RELU_MARGIN {
            return Ok((params, sample));
        }
    }
    unreachable!()
}

/// Reconstruction weight 1 keeps the loss of order one, so finite
/// differences are not swamped by rounding.
fn composite_lambdas() -> Lambdas {
    Lambdas { l1: 1.0, ..Lambdas::default() }
}

/// Every parameter of a small fused model against the full pretraining loss
/// (all four heads, dropout active with a fixed mask) on a six-frame clip
/// observed for two frames.
fn check_composite(seed: u64, tamper: impl Fn(&mut [Tensor])) -> Result<GradCheck> {
    let (params, sample) = composite_case(seed)?;
    let model = FlVae::new(composite_config(), params.clone())?;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    grad_check_with(
        |t, v| {
            let pv = ParamVars::from_vars(names.iter().cloned().zip(v.iter().copied()));
            Ok(model.pretrain_objective(t, &pv, &sample, 2, composite_lambdas(), Pass::train(seed))?.0)
        },
        &inputs,
        Stencil::Extrapolated(COMPOSITE_EPS),
        tamper,
    )
}

/// Checks each op in `ops` at seeds `0..seeds`. `corrupt` names an op whose
/// analytic gradient is deliberately perturbed.
pub fn run_suite(ops: &[&str], seeds: usize, tolerance: f64, corrupt: Option<&str>) -> Result<Vec<OpReport>> {
    if let Some(c) = corrupt {
        if !OPS.contains(&c) {
            return Err(Error::Config(format!("unknown gradient-check op {:?}", c)));
        }
    }
    let mut out = Vec::with_capacity(ops.len());
    for &op in ops {
        let mut report = OpReport {
            op: op.to_string(),
            seeds,
            max_rel_err: 0.0,
            worst_seed: 0,
            checked: 0,
            skipped: 0,
            passed: true,
        };
        for seed in 0..seeds as u64 {
            let res = check_op(op, seed, corrupt == Some(op))?;
            report.checked += res.checked;
            report.skipped += res.skipped;
            if res.max_rel_err > report.max_rel_err || !res.max_rel_err.is_finite() {
                report.max_rel_err = res.max_rel_err;
                report.worst_seed = seed;
            }
        }
        // at most 1% of components may sit on a kink
        report.passed = report.max_rel_err.is_finite()
            && report.max_rel_err < tolerance
            && report.skipped * 100 <= report.checked + report.skipped;
        out.push(report);
    }
    Ok(out)
}
