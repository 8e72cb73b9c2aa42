//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported operation has a plain Rust counterpart returning
//! `flvae::Result`, which is what the native tests exercise; the
//! `#[wasm_bindgen]` wrappers only convert errors for JavaScript.

use flvae::autodiff::Tape;
use flvae::data::{gen_dataset, SynthConfig, VideoClip};
use flvae::flow::{luma, tv_l1, TvL1Params};
use flvae::{rng, Error, Result, Tensor};
use wasm_bindgen::prelude::*;

pub const SIZE: usize = 48;
pub const FRAMES: usize = 16;
pub const CLASSES: usize = 6;

fn clip(class: usize, seed: u32) -> Result<VideoClip> {
    if class >= CLASSES {
        return Err(Error::Config(format!("class {class} outside 0..{CLASSES}")));
    }
    let cfg = SynthConfig { n_classes: CLASSES, clips_per_class: 1, seed: seed as u64, ..SynthConfig::default() };
    Ok(gen_dataset(&cfg)?.swap_remove(class))
}

fn frame_index(frame: usize, last: usize) -> Result<usize> {
    if frame > last {
        return Err(Error::Config(format!("frame {frame} outside 0..={last}")));
    }
    Ok(frame)
}

/// Frame `frame` of the synthetic clip of `class`, as 48x48 RGBA bytes.
pub fn render_frame(class: usize, frame: usize, seed: u32) -> Result<Vec<u8>> {
    let c = clip(class, seed)?;
    let f = c.frame(frame_index(frame, FRAMES - 1)?);
    let mut out = Vec::with_capacity(SIZE * SIZE * 4);
    for px in f.data().chunks_exact(3) {
        out.extend(px.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out.push(255);
    }
    Ok(out)
}

/// TV-L1 flow between frames `frame` and `frame + 1`.
#[wasm_bindgen]
pub struct FlowView {
    rgba: Vec<u8>,
    mean: f64,
    peak: f64,
}

#[wasm_bindgen]
impl FlowView {
    /// Magnitude as 48x48 RGBA, scaled so `peak` maps to full intensity.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Mean displacement in pixels.
    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[wasm_bindgen(getter)]
    pub fn peak(&self) -> f64 {
        self.peak
    }
}

pub fn flow_view(class: usize, frame: usize, seed: u32) -> Result<FlowView> {
    let c = clip(class, seed)?;
    let k = frame_index(frame, FRAMES - 2)?;
    let gray = |i: usize| luma(&c.frame(i));
    let field = tv_l1(&gray(k)?, &gray(k + 1)?, &TvL1Params::default())?;
    let mag = field.magnitude();
    let peak = mag.max_abs();
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let mut rgba = Vec::with_capacity(mag.len() * 4);
    for &m in mag.data() {
        // dark blue to yellow
        let t = m * scale;
        rgba.extend([(255.0 * t).round() as u8, (40.0 + 200.0 * t).round() as u8, (120.0 * (1.0 - t)).round() as u8, 255]);
    }
    Ok(FlowView { rgba, mean: field.mean_magnitude(), peak })
}

/// Samples of `z = mean + exp(logvar / 2) * eps`, drawn through the
/// autodiff reparameterization op, binned over `mean ± 4σ`.
pub fn reparam_histogram(mean: f64, logvar: f64, samples: usize, bins: usize, seed: u32) -> Result<Vec<u32>> {
    if samples == 0 || bins == 0 {
        return Err(Error::Config("samples and bins must be positive".into()));
    }
    let tape = Tape::new();
    let m = tape.constant(Tensor::full([samples], mean));
    let lv = tape.constant(Tensor::full([samples], logvar));
    let z = tape.reparameterize(m, lv, rng::normal_vec(seed as u64, samples))?.value();
    let sigma = (0.5 * logvar).exp();
    let (lo, width) = (mean - 4.0 * sigma, 8.0 * sigma / bins as f64);
    let mut counts = vec![0u32; bins];
    for &v in z.data() {
        let b = ((v - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        }
    }
    Ok(counts)
}

/// KL divergence of `N(mean, exp(logvar))` from the standard normal.
pub fn kl_to_prior(mean: f64, logvar: f64) -> Result<f64> {
    let tape = Tape::new();
    let kl = tape.kl_std_normal(tape.constant(Tensor::from_vec(vec![mean])), tape.constant(Tensor::from_vec(vec![logvar])))?;
    Ok(kl.item())
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = frameRgba)]
pub fn frame_rgba_js(class: usize, frame: usize, seed: u32) -> std::result::Result<Vec<u8>, JsError> {
    js(render_frame(class, frame, seed))
}

#[wasm_bindgen(js_name = flowView)]
pub fn flow_view_js(class: usize, frame: usize, seed: u32) -> std::result::Result<FlowView, JsError> {
    js(flow_view(class, frame, seed))
}

#[wasm_bindgen(js_name = reparamHistogram)]
pub fn reparam_histogram_js(mean: f64, logvar: f64, samples: usize, bins: usize, seed: u32) -> std::result::Result<Vec<u32>, JsError> {
    js(reparam_histogram(mean, logvar, samples, bins, seed))
}

#[wasm_bindgen(js_name = klToPrior)]
pub fn kl_to_prior_js(mean: f64, logvar: f64) -> std::result::Result<f64, JsError> {
    js(kl_to_prior(mean, logvar))
}

#[wasm_bindgen]
pub fn frames() -> usize {
    FRAMES
}

#[wasm_bindgen]
pub fn classes() -> usize {
    CLASSES
}

#[wasm_bindgen(js_name = frameSize)]
pub fn frame_size() -> usize {
    SIZE
}
