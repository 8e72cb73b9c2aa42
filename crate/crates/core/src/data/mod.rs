//! Video clips, the synthetic action dataset, augmentation and persistence.

mod augment;
mod io;
mod synth;

pub use augment::{multiscale_crop, random_clip, resize, scaled_crop_sizes, truncate_ratio, observed_len};
pub use io::{load_clip, load_manifest, read_clip, save_clip, save_manifest, write_clip, ManifestRow, CLIP_MAGIC};
pub use synth::{gen_dataset, split_train_test, Behaviour, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A `(T, H, W, C)` frame sequence. RGB clips have `C = 3` with values in
/// `[0, 1]`; flow clips stored in the same container have `C = 2`.
///
/// Values are rounded to `f32` precision on construction so that the
/// on-disk container round-trips bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: Tensor,
    pub label: Option<usize>,
    pub id: String,
}

impl VideoClip {
    pub fn new(id: impl Into<String>, frames: Tensor, label: Option<usize>) -> Result<Self> {
        if frames.rank() != 4 || frames.shape().contains(&0) {
            return Err(Error::dim("video clip", format!("expected non-empty (T,H,W,C), got {:?}", frames.shape())));
        }
        let frames = frames.map(|v| v as f32 as f64);
        Ok(VideoClip { frames, label, id: id.into() })
    }

    /// Clamps values into `[0, 1]` before construction.
    pub fn new_clamped(id: impl Into<String>, frames: Tensor, label: Option<usize>) -> Result<Self> {
        Self::new(id, frames.map(|v| v.clamp(0.0, 1.0)), label)
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(T, H, W, C)`.
    pub fn dims(&self) -> [usize; 4] {
        let s = self.frames.shape();
        [s[0], s[1], s[2], s[3]]
    }

    /// Frame `i` as an `(H, W, C)` tensor.
    pub fn frame(&self, i: usize) -> Tensor {
        let [_, h, w, c] = self.dims();
        self.frames.narrow0(i, 1).and_then(|t| t.reshape([h, w, c])).expect("frame index in range")
    }

    /// Frames `[start, start + len)` as a new clip with the same id and label.
    pub fn window(&self, start: usize, len: usize) -> Result<VideoClip> {
        Ok(VideoClip { frames: self.frames.narrow0(start, len)?, label: self.label, id: self.id.clone() })
    }

    /// Channel-first `(C, T, H, W)` layout used by the convolutional encoder.
    pub fn channels_first(&self) -> Tensor {
        self.frames.permute(&[3, 0, 1, 2])
    }
}
