//! Synthetic predictable-action clips.
//!
//! Every clip shows a Gaussian blob entering from the left and heading for
//! the frame centre. Up to the key frame the trajectory law is the same for
//! every class; afterwards the blob follows its class behaviour (turn,
//! reverse, accelerate, stop, split). The only pre-key-frame hint is the
//! blob's aspect ratio, which depends on the class while its area does not.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::VideoClip;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub clips_per_class: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub key_frame_fraction: f64,
    pub noise_std: f64,
    /// Blob standard deviation in pixels for a 48-pixel frame; scales with
    /// the frame size.
    pub blob_sigma: f64,
    /// Aspect ratio of the most elongated class; classes are spaced
    /// geometrically between `1/aspect_span` and `aspect_span`.
    pub aspect_span: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 6,
            clips_per_class: 10,
            frames: 16,
            height: 48,
            width: 48,
            key_frame_fraction: 0.5,
            noise_std: 0.02,
            blob_sigma: 5.0,
            aspect_span: 1.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_classes > Behaviour::ALL.len() {
            return Err(Error::Config(format!("n_classes must be 1..={}", Behaviour::ALL.len())));
        }
        if self.frames < 2 || self.height < 8 || self.width < 8 {
            return Err(Error::dim(
                "gen_dataset",
                format!("clip dims {}x{}x{} too small", self.frames, self.height, self.width),
            ));
        }
        if !(self.key_frame_fraction > 0.0 && self.key_frame_fraction < 1.0) {
            return Err(Error::Config(format!("key_frame_fraction {} outside (0,1)", self.key_frame_fraction)));
        }
        if !(self.aspect_span >= 1.0) {
            return Err(Error::Config(format!("aspect_span {} must be at least 1", self.aspect_span)));
        }
        if !(self.blob_sigma > 0.0) {
            return Err(Error::Config(format!("blob_sigma {} must be positive", self.blob_sigma)));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be nonnegative".into()));
        }
        Ok(())
    }

    /// Index of the last frame shared by all classes.
    pub fn key_frame(&self) -> usize {
        (self.key_frame_fraction * self.frames as f64).floor() as usize
    }

    /// Blob aspect ratio (σx/σy) planted for `class`.
    pub fn aspect(&self, class: usize) -> f64 {
        if self.n_classes == 1 {
            return 1.0;
        }
        let half = (self.n_classes - 1) as f64 / 2.0;
        self.aspect_span.powf((class as f64 - half) / half)
    }
}

/// What the blob does after the key frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behaviour {
    TurnUp,
    TurnDown,
    Reverse,
    Accelerate,
    Stop,
    Split,
}

impl Behaviour {
    pub const ALL: [Behaviour; 6] = [
        Behaviour::TurnUp,
        Behaviour::TurnDown,
        Behaviour::Reverse,
        Behaviour::Accelerate,
        Behaviour::Stop,
        Behaviour::Split,
    ];

    /// Velocities of the post-key-frame blob(s) given the incoming velocity.
    fn velocities(self, v: (f64, f64)) -> Vec<(f64, f64)> {
        let up = (v.1, -v.0);
        let down = (-v.1, v.0);
        match self {
            Behaviour::TurnUp => vec![up],
            Behaviour::TurnDown => vec![down],
            Behaviour::Reverse => vec![(-v.0, -v.1)],
            Behaviour::Accelerate => vec![(1.6 * v.0, 1.6 * v.1)],
            Behaviour::Stop => vec![(0.0, 0.0)],
            Behaviour::Split => vec![up, down],
        }
    }
}

/// Blob centres per frame; several centres after a split.
pub(crate) fn trajectory(
    behaviour: Behaviour,
    frames: usize,
    key: usize,
    at_key: (f64, f64),
    v: (f64, f64),
) -> Vec<Vec<(f64, f64)>> {
    let post = behaviour.velocities(v);
    (0..frames)
        .map(|t| {
            let dt = t as f64 - key as f64;
            if t <= key {
                vec![(at_key.0 + dt * v.0, at_key.1 + dt * v.1)]
            } else {
                post.iter().map(|p| (at_key.0 + dt * p.0, at_key.1 + dt * p.1)).collect()
            }
        })
        .collect()
}

fn render_clip(cfg: &SynthConfig, class: usize, index: usize) -> Result<VideoClip> {
    let id = format!("c{:02}_{:03}", class, index);
    let mut r = rng::rng(cfg.seed, &[rng::hash_str(&id)]);
    let (h, w, t) = (cfg.height, cfg.width, cfg.frames);
    let scale = w.min(h) as f64 / 48.0;

    // shared law before the key frame
    let angle = r.random_range(-25f64..25.0).to_radians();
    let speed = r.random_range(1.2..2.0) * scale;
    let v = (speed * angle.cos(), speed * angle.sin());
    let at_key = (
        w as f64 / 2.0 + r.random_range(-4.0..4.0) * scale,
        h as f64 / 2.0 + r.random_range(-4.0..4.0) * scale,
    );
    let color: [f64; 3] = std::array::from_fn(|_| r.random_range(0.6..1.0));
    let background = 0.08;

    let sigma = cfg.blob_sigma * scale;
    let aspect = cfg.aspect(class) * r.random_range(0.97..1.03);
    let (sx, sy) = (sigma * aspect.sqrt(), sigma / aspect.sqrt());

    let centres = trajectory(Behaviour::ALL[class], t, cfg.key_frame(), at_key, v);
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut data = Vec::with_capacity(t * h * w * 3);
    for frame in &centres {
        for y in 0..h {
            for x in 0..w {
                let intensity: f64 = frame
                    .iter()
                    .map(|&(cx, cy)| {
                        let dx = (x as f64 - cx) / sx;
                        let dy = (y as f64 - cy) / sy;
                        (-0.5 * (dx * dx + dy * dy)).exp()
                    })
                    .sum::<f64>()
                    .min(1.0);
                for c in color {
                    let clean = background + (c - background) * intensity;
                    let n = if cfg.noise_std > 0.0 { noise.sample(&mut r) } else { 0.0 };
                    data.push(clean + n);
                }
            }
        }
    }
    VideoClip::new_clamped(id, Tensor::new([t, h, w, 3], data)?, Some(class))
}

/// Balanced labelled dataset, class-major order; a pure function of `cfg`.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<Vec<VideoClip>> {
    cfg.validate()?;
    let mut clips = Vec::with_capacity(cfg.n_classes * cfg.clips_per_class);
    for class in 0..cfg.n_classes {
        for i in 0..cfg.clips_per_class {
            clips.push(render_clip(cfg, class, i)?);
        }
    }
    Ok(clips)
}

/// Seeded stratified split; `train_fraction` of each class goes to training.
pub fn split_train_test(clips: &[VideoClip], train_fraction: f64, seed: u64) -> (Vec<VideoClip>, Vec<VideoClip>) {
    use rand::seq::SliceRandom;
    let n_classes = clips.iter().filter_map(|c| c.label).max().map_or(0, |m| m + 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in 0..n_classes {
        let mut members: Vec<&VideoClip> = clips.iter().filter(|c| c.label == Some(class)).collect();
        members.shuffle(&mut rng::rng(seed, &[0x5EED, class as u64]));
        let k = (members.len() as f64 * train_fraction).round() as usize;
        for (i, c) in members.into_iter().enumerate() {
            if i < k {
                train.push(c.clone());
            } else {
                test.push(c.clone());
            }
        }
    }
    let unlabeled = clips.iter().filter(|c| c.label.is_none()).cloned();
    train.extend(unlabeled);
    (train, test)
}
