use crate::data::{multiscale_crop, scaled_crop_sizes, VideoClip};
use crate::error::Result;
use crate::flow::TvL1Params;
use crate::model::{ModelConfig, Prepared};
use crate::rng;

/// Resizes every clip to the network input and attaches its flow.
pub fn prepare(clips: &[VideoClip], config: &ModelConfig, flow: &TvL1Params) -> Result<Vec<Prepared>> {
    clips.iter().map(|c| Prepared::from_clip(c, config.frame_h, config.frame_w, flow)).collect()
}

/// Like [`prepare`], optionally adding one random multi-scale crop per clip
/// next to the original. Crop sizes are {320, 360, 400} scaled from a
/// 480-wide source to the clip width.
pub fn prepare_training(
    clips: &[VideoClip],
    config: &ModelConfig,
    flow: &TvL1Params,
    multiscale: bool,
    seed: u64,
) -> Result<Vec<Prepared>> {
    if !multiscale {
        return prepare(clips, config, flow);
    }
    let mut out = Vec::with_capacity(2 * clips.len());
    for c in clips {
        let sizes = scaled_crop_sizes(&[320, 360, 400], 480, c.dims()[2]);
        let mut r = rng::rng(seed, &[0xC0, rng::hash_str(&c.id)]);
        let [mut crop, original] = multiscale_crop(c, &sizes, &mut r)?;
        crop.id = format!("{}~crop", c.id);
        for v in [crop, original] {
            out.push(Prepared::from_clip(&v, config.frame_h, config.frame_w, flow)?);
        }
    }
    Ok(out)
}
