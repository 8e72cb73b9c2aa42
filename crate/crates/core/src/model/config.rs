use std::fmt;
use std::str::FromStr;

use crate::autodiff::ConvGeom;
use crate::autodiff::pool::spp_width;
use crate::error::{Error, Result};

/// Input streams of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    Rgb,
    RgbFlow,
}

impl EncoderMode {
    pub fn uses_flow(self) -> bool {
        self == EncoderMode::RgbFlow
    }
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Rgb => "rgb",
            EncoderMode::RgbFlow => "rgb+flow",
        })
    }
}

impl FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(EncoderMode::Rgb),
            "rgb+flow" | "rgb-flow" => Ok(EncoderMode::RgbFlow),
            other => Err(Error::Config(format!("unknown encoder mode {:?}", other))),
        }
    }
}

/// Decoder heads and what they generate from the latent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadKind {
    /// Next frame `I_{t+1}`.
    ShortTermRgb,
    /// Frame `I_{t+4}`.
    LongTermRgb,
    /// Last observed frame `I_t`.
    PastRgb,
    /// Next flow field `F_{t+1}`, normalized.
    FutureFlow,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [HeadKind::ShortTermRgb, HeadKind::LongTermRgb, HeadKind::PastRgb, HeadKind::FutureFlow];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::ShortTermRgb => "short",
            HeadKind::LongTermRgb => "long",
            HeadKind::PastRgb => "past",
            HeadKind::FutureFlow => "flow",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            HeadKind::FutureFlow => 2,
            _ => 3,
        }
    }

    pub fn is_rgb(self) -> bool {
        self != HeadKind::FutureFlow
    }

    /// Frames that must exist after an observed window of length `t`.
    pub fn frames_ahead(self) -> usize {
        match self {
            HeadKind::ShortTermRgb | HeadKind::FutureFlow => 1,
            HeadKind::LongTermRgb => 4,
            HeadKind::PastRgb => 0,
        }
    }

    /// Parses a comma-separated set such as `short,long` into canonical
    /// order, so the reconstruction sum does not depend on how it was typed.
    pub fn parse_set(s: &str) -> Result<Vec<HeadKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            out.push(part.parse::<HeadKind>()?);
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown decoder head {:?}", s)))
    }
}

/// Which half of the latent sample a decoder family reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentPart {
    Z1,
    Z2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvLayer {
    pub fn geom(&self) -> ConvGeom {
        ConvGeom::new(self.stride, self.padding)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Exactly four layers per stream.
    pub layers: Vec<ConvLayer>,
    pub keep_prob: f64,
    pub spp_bins: Vec<usize>,
    pub latent_dim: usize,
    pub mode: EncoderMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let layer = |out_channels, stride| ConvLayer { out_channels, kernel: [3, 3, 3], stride, padding: [1, 1, 1] };
        EncoderConfig {
            layers: vec![layer(4, [1, 2, 2]), layer(8, [2, 1, 1]), layer(8, [1, 2, 2]), layer(8, [2, 1, 1])],
            keep_prob: 0.9,
            spp_bins: vec![4, 2, 1],
            latent_dim: 12,
            mode: EncoderMode::RgbFlow,
        }
    }
}

impl EncoderConfig {
    /// Width of one stream's pooled descriptor.
    pub fn stream_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels) * spp_width(&self.spp_bins)
    }

    /// Width of the fused descriptor feeding the mean/log-variance layers.
    pub fn fused_width(&self) -> usize {
        match self.mode {
            EncoderMode::Rgb => self.stream_width(),
            EncoderMode::RgbFlow => 2 * self.stream_width(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeconvLayer {
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

/// Dense expansion to a `(seed_channels, 1, H/8, W/8)` volume followed by
/// five transposed convolutions. The last layer's channel count is set per
/// head (3 for RGB, 2 for flow).
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    pub seed_channels: usize,
    pub layers: Vec<DeconvLayer>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let keep = |c| DeconvLayer { out_channels: c, kernel: [1, 3, 3], stride: [1, 1, 1], padding: [0, 1, 1] };
        let up = |c| DeconvLayer { out_channels: c, kernel: [1, 4, 4], stride: [1, 2, 2], padding: [0, 1, 1] };
        DecoderConfig { seed_channels: 32, layers: vec![keep(48), up(32), up(32), up(16), keep(0)] }
    }
}

impl DecoderConfig {
    /// Total spatial upsampling factor of the stack.
    pub fn upsampling(&self) -> [usize; 2] {
        self.layers.iter().fold([1, 1], |acc, l| [acc[0] * l.stride[1], acc[1] * l.stride[2]])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub heads: Vec<HeadKind>,
    pub n_classes: usize,
    /// Network input frame size.
    pub frame_h: usize,
    pub frame_w: usize,
    /// Apply a sigmoid to the classifier's affine output before softmax.
    pub classifier_sigmoid: bool,
    pub rgb_part: LatentPart,
    pub flow_part: LatentPart,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            heads: vec![HeadKind::ShortTermRgb, HeadKind::LongTermRgb],
            n_classes: 6,
            frame_h: 24,
            frame_w: 24,
            classifier_sigmoid: false,
            rgb_part: LatentPart::Z1,
            flow_part: LatentPart::Z2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.layers.len() != 4 {
            return Err(Error::Config(format!("encoder needs exactly 4 conv layers, got {}", e.layers.len())));
        }
        if e.latent_dim != 12 {
            return Err(Error::Config(format!("latent width must be 12, got {}", e.latent_dim)));
        }
        if !(e.keep_prob > 0.0 && e.keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep_prob {} outside (0, 1]", e.keep_prob)));
        }
        if self.decoder.layers.len() != 5 {
            return Err(Error::Config(format!("decoder needs exactly 5 deconv layers, got {}", self.decoder.layers.len())));
        }
        let [uh, uw] = self.decoder.upsampling();
        if self.frame_h % uh != 0 || self.frame_w % uw != 0 {
            return Err(Error::Config(format!(
                "frame {}x{} not divisible by decoder upsampling {}x{}",
                self.frame_h, self.frame_w, uh, uw
            )));
        }
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be positive".into()));
        }
        // spatial extent entering SPP must admit the largest bin
        let mut hw = [self.frame_h, self.frame_w];
        for l in &e.layers {
            for a in 0..2 {
                let padded = hw[a] + 2 * l.padding[a + 1];
                if padded < l.kernel[a + 1] {
                    return Err(Error::Config("encoder kernel larger than feature map".into()));
                }
                hw[a] = (padded - l.kernel[a + 1]) / l.stride[a + 1] + 1;
            }
        }
        let bmax = e.spp_bins.iter().copied().max().unwrap_or(0);
        if bmax == 0 || hw[0] < bmax || hw[1] < bmax {
            return Err(Error::Config(format!("SPP bins {:?} exceed final feature map {:?}", e.spp_bins, hw)));
        }
        Ok(())
    }

    /// Longest look-ahead among the active heads.
    pub fn max_frames_ahead(&self) -> usize {
        self.heads.iter().map(|h| h.frames_ahead()).max().unwrap_or(0)
    }

    pub fn seed_hw(&self) -> [usize; 2] {
        let [uh, uw] = self.decoder.upsampling();
        [self.frame_h / uh, self.frame_w / uw]
    }

    pub fn part_for(&self, head: HeadKind) -> LatentPart {
        if head.is_rgb() {
            self.rgb_part
        } else {
            self.flow_part
        }
    }
}
