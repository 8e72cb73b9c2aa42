//! Clip-level augmentation: random temporal windows, multi-scale spatial
//! crops, bilinear resizing and observation-ratio truncation.

use rand::Rng;

use super::VideoClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Contiguous window of `len` frames starting at a uniformly random offset.
pub fn random_clip(video: &VideoClip, len: usize, rng: &mut impl Rng) -> Result<VideoClip> {
    let t = video.len();
    if len == 0 || len > t {
        return Err(Error::param("random_clip", format!("length {} for a {}-frame clip", len, t)));
    }
    let start = rng.random_range(0..=t - len);
    video.window(start, len)
}

/// Crop sizes `sizes` defined against a source `source_width` wide,
/// rescaled proportionally to a frame `width` wide.
pub fn scaled_crop_sizes(sizes: &[usize], source_width: usize, width: usize) -> Vec<usize> {
    sizes
        .iter()
        .map(|&s| ((s * width) as f64 / source_width as f64).round() as usize)
        .collect()
}

/// Picks a square crop size uniformly from `sizes` and a random spatial
/// window shared by all frames. Returns `[crop, original]`.
pub fn multiscale_crop(video: &VideoClip, sizes: &[usize], rng: &mut impl Rng) -> Result<[VideoClip; 2]> {
    let [t, h, w, c] = video.dims();
    if sizes.is_empty() {
        return Err(Error::param("multiscale_crop", "empty size set"));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > h.min(w)) {
        return Err(Error::dim("multiscale_crop", format!("crop {} larger than {}x{} frame", s, h, w)));
    }
    let size = sizes[rng.random_range(0..sizes.len())];
    let y0 = rng.random_range(0..=h - size);
    let x0 = rng.random_range(0..=w - size);
    let src = video.frames();
    let mut data = Vec::with_capacity(t * size * size * c);
    for f in 0..t {
        for y in y0..y0 + size {
            let row = ((f * h + y) * w + x0) * c;
            data.extend_from_slice(&src.data()[row..row + size * c]);
        }
    }
    let crop = VideoClip::new(video.id.clone(), Tensor::new([t, size, size, c], data)?, video.label)?;
    Ok([crop, video.clone()])
}

/// Per-frame bilinear resize with pixel-centre alignment.
pub fn resize(video: &VideoClip, out_h: usize, out_w: usize) -> Result<VideoClip> {
    let [t, h, w, c] = video.dims();
    if out_h == 0 || out_w == 0 {
        return Err(Error::param("resize", format!("target {}x{}", out_h, out_w)));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(video.clone());
    }
    let src = video.frames().data();
    let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    let coord = |o: usize, s: f64, n: usize| {
        let p = ((o as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = p.floor() as usize;
        (i0, (i0 + 1).min(n - 1), p - i0 as f64)
    };
    let mut data = Vec::with_capacity(t * out_h * out_w * c);
    for f in 0..t {
        for y in 0..out_h {
            let (y0, y1, fy) = coord(y, sy, h);
            for x in 0..out_w {
                let (x0, x1, fx) = coord(x, sx, w);
                for ch in 0..c {
                    let at = |yy: usize, xx: usize| src[((f * h + yy) * w + xx) * c + ch];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    data.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    VideoClip::new(video.id.clone(), Tensor::new([t, out_h, out_w, c], data)?, video.label)
}

/// `⌊r·T⌋`, robust to `r·T` landing a rounding error below an integer.
pub fn observed_len(ratio: f64, frames: usize) -> usize {
    (ratio * frames as f64 + 1e-9).floor() as usize
}

/// The first `⌊r·T⌋` frames.
pub fn truncate_ratio(video: &VideoClip, ratio: f64) -> Result<VideoClip> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param("truncate_ratio", format!("ratio {} outside (0, 1]", ratio)));
    }
    let n = observed_len(ratio, video.len());
    if n < 2 {
        return Err(Error::param(
            "truncate_ratio",
            format!("ratio {} keeps {} of {} frames, need at least 2", ratio, n, video.len()),
        ));
    }
    video.window(0, n)
}
