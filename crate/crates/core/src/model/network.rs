use crate::autodiff::{ConvGeom, Tape, Var};
use crate::data::{observed_len, resize, truncate_ratio, VideoClip};
use crate::error::{Error, Result};
use crate::flow::{flow_clip, normalize_flow, TvL1Params};
use crate::rng;
use crate::tensor::Tensor;

use super::config::{HeadKind, LatentPart, ModelConfig};
use super::loss::{assemble_pretrain_loss, Lambdas, LossBreakdown};
use super::params::{l2_penalty_where, ParamVars, ParameterSet};

/// Bounds applied to the encoder's log-variance output.
pub const LOGVAR_CLAMP: (f64, f64) = (-20.0, 20.0);

/// A clip resized to the network input and paired with its normalized flow,
/// both channel-first: RGB `(3, T, H, W)` and flow `(2, T-1, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub id: String,
    pub label: Option<usize>,
    pub rgb: Tensor,
    pub flow: Tensor,
}

/// Frames `[0, len)` along the time axis of a `(C, T, H, W)` tensor.
pub fn time_prefix(t: &Tensor, len: usize) -> Result<Tensor> {
    time_window(t, 0, len)
}

/// Frames `[start, start + len)` along the time axis of a `(C, T, H, W)` tensor.
pub fn time_window(t: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let s = t.shape();
    if s.len() != 4 || start + len > s[1] {
        return Err(Error::dim("time window", format!("{}..{} of {:?}", start, start + len, s)));
    }
    let plane = s[2] * s[3];
    let mut data = Vec::with_capacity(s[0] * len * plane);
    for c in 0..s[0] {
        let base = (c * s[1] + start) * plane;
        data.extend_from_slice(&t.data()[base..base + len * plane]);
    }
    Tensor::new([s[0], len, s[2], s[3]], data)
}

impl Prepared {
    /// Resizes to `frame_h × frame_w`, computes TV-L1 flow between
    /// consecutive frames and normalizes it into `[0, 1]`.
    pub fn from_clip(clip: &VideoClip, frame_h: usize, frame_w: usize, flow: &TvL1Params) -> Result<Self> {
        let small = resize(clip, frame_h, frame_w)?;
        let raw = flow_clip(small.frames(), flow)?;
        Ok(Prepared {
            id: clip.id.clone(),
            label: clip.label,
            rgb: small.channels_first(),
            flow: normalize_flow(&raw).permute(&[3, 0, 1, 2]),
        })
    }

    pub fn frames(&self) -> usize {
        self.rgb.shape()[1]
    }

    /// Window of frames `[start, start + len)`; its flow covers the same span.
    pub fn window(&self, start: usize, len: usize) -> Result<Prepared> {
        if len < 2 {
            return Err(Error::param("window", format!("need at least 2 frames, got {}", len)));
        }
        Ok(Prepared {
            id: self.id.clone(),
            label: self.label,
            rgb: time_window(&self.rgb, start, len)?,
            flow: time_window(&self.flow, start, len - 1)?,
        })
    }

    /// Observed RGB frames `[0, t)`.
    pub fn observed_rgb(&self, t: usize) -> Result<Tensor> {
        time_prefix(&self.rgb, t)
    }

    /// Flow fields between the observed frames.
    pub fn observed_flow(&self, t: usize) -> Result<Tensor> {
        if t < 2 {
            return Err(Error::param("observed_flow", format!("need at least 2 observed frames, got {}", t)));
        }
        time_prefix(&self.flow, t - 1)
    }

    /// Ground truth for `head` after observing `t` frames, shaped `(C, 1, H, W)`.
    pub fn target(&self, head: HeadKind, t: usize) -> Result<Tensor> {
        let too_short = || {
            Error::param(
                "decoder target",
                format!("head {} needs {} frames after {} observed, clip has {}", head, head.frames_ahead(), t, self.frames()),
            )
        };
        if t == 0 || t + head.frames_ahead() > self.frames() {
            return Err(too_short());
        }
        match head {
            HeadKind::ShortTermRgb => time_window(&self.rgb, t, 1),
            HeadKind::LongTermRgb => time_window(&self.rgb, t + 3, 1),
            HeadKind::PastRgb => time_window(&self.rgb, t - 1, 1),
            HeadKind::FutureFlow => time_window(&self.flow, t - 1, 1),
        }
    }
}

/// Mean, log-variance and one reparameterized draw of the latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub mean: Tensor,
    pub logvar: Tensor,
    pub noise: Tensor,
    pub sample: Tensor,
}

impl LatentCode {
    fn half(&self) -> usize {
        self.sample.len() / 2
    }

    pub fn z1(&self) -> Tensor {
        Tensor::from_vec(self.sample.data()[..self.half()].to_vec())
    }

    pub fn z2(&self) -> Tensor {
        Tensor::from_vec(self.sample.data()[self.half()..].to_vec())
    }
}

/// Whether dropout is active and which seed drives its masks and the
/// latent noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pass {
    pub training: bool,
    pub seed: u64,
}

impl Pass {
    pub fn eval(seed: u64) -> Self {
        Pass { training: false, seed }
    }

    pub fn train(seed: u64) -> Self {
        Pass { training: true, seed }
    }

    pub fn noise(&self, dim: usize) -> Tensor {
        rng::normal_vec(rng::derive(self.seed, &[0x7A]), dim)
    }
}

pub struct EncodedVars<'t> {
    pub features: Var<'t>,
    pub mean: Var<'t>,
    pub logvar: Var<'t>,
}

/// Encoder, decoder heads and classifier over one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct FlVae {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc.")
}

pub fn is_classifier_param(name: &str) -> bool {
    name.starts_with("cls.")
}

pub fn head_prefix(head: HeadKind) -> String {
    format!("dec.{}.", head.name())
}

impl FlVae {
    pub fn new(config: ModelConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        for (name, shape) in Self::param_shapes(&config) {
            let t = params.require(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::dim("parameters", format!("{} has shape {:?}, expected {:?}", name, t.shape(), shape)));
            }
        }
        Ok(FlVae { config, params })
    }

    /// Rebuilds a model around loaded parameters, reading the encoder mode,
    /// the decoder heads and the class count off the parameter names.
    pub fn from_params(mut base: ModelConfig, params: ParameterSet) -> Result<Self> {
        base.encoder.mode = if params.get("enc.flow.conv0.weight").is_some() {
            super::config::EncoderMode::RgbFlow
        } else {
            super::config::EncoderMode::Rgb
        };
        base.heads = HeadKind::ALL
            .into_iter()
            .filter(|h| params.get(&format!("{}dense.weight", head_prefix(*h))).is_some())
            .collect();
        base.n_classes = params.require("cls.weight")?.shape()[0];
        FlVae::new(base, params)
    }

    /// Names and shapes of every parameter the configuration needs.
    pub fn param_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let e = &config.encoder;
        let mut streams = vec![("rgb", 3)];
        if e.mode.uses_flow() {
            streams.push(("flow", 2));
        }
        for (s, cin) in streams {
            let mut c = cin;
            for (i, l) in e.layers.iter().enumerate() {
                let [a, b, d] = l.kernel;
                out.push((format!("enc.{s}.conv{i}.weight"), vec![l.out_channels, c, a, b, d]));
                out.push((format!("enc.{s}.conv{i}.bias"), vec![l.out_channels]));
                c = l.out_channels;
            }
        }
        let fw = e.fused_width();
        for h in ["mean", "logvar"] {
            out.push((format!("enc.{h}.weight"), vec![e.latent_dim, fw]));
            out.push((format!("enc.{h}.bias"), vec![e.latent_dim]));
        }
        let half = e.latent_dim / 2;
        let [sh, sw] = config.seed_hw();
        let d = &config.decoder;
        for &head in &config.heads {
            let p = head_prefix(head);
            out.push((format!("{p}dense.weight"), vec![d.seed_channels * sh * sw, half]));
            out.push((format!("{p}dense.bias"), vec![d.seed_channels * sh * sw]));
            let mut c = d.seed_channels;
            for (i, l) in d.layers.iter().enumerate() {
                let oc = if i + 1 == d.layers.len() { head.channels() } else { l.out_channels };
                let [a, b, k] = l.kernel;
                out.push((format!("{p}deconv{i}.weight"), vec![c, oc, a, b, k]));
                out.push((format!("{p}deconv{i}.bias"), vec![oc]));
                c = oc;
            }
        }
        out.push(("cls.weight".into(), vec![config.n_classes, e.latent_dim]));
        out.push(("cls.bias".into(), vec![config.n_classes]));
        out
    }

    fn stream<'t>(&self, tape: &'t Tape, pv: &ParamVars<'t>, name: &str, mut x: Var<'t>, pass: Pass) -> Result<Var<'t>> {
        let e = &self.config.encoder;
        for (i, l) in e.layers.iter().enumerate() {
            let w = pv.get(&format!("enc.{name}.conv{i}.weight"))?;
            let b = pv.get(&format!("enc.{name}.conv{i}.bias"))?;
            x = tape.relu(tape.conv3d(x, w, b, l.geom())?);
            let seed = rng::derive(pass.seed, &[rng::hash_str(name), i as u64]);
            x = tape.dropout(x, e.keep_prob, seed, pass.training)?;
        }
        tape.spp_pool(x, &e.spp_bins)
    }

    /// Encodes observed RGB `(3, t, H, W)` and, in two-stream mode, flow
    /// `(2, t-1, H, W)` into mean and clamped log-variance.
    pub fn encode_on<'t>(
        &self,
        tape: &'t Tape,
        pv: &ParamVars<'t>,
        rgb: Var<'t>,
        flow: Option<Var<'t>>,
        pass: Pass,
    ) -> Result<EncodedVars<'t>> {
        let (h, w) = (self.config.frame_h, self.config.frame_w);
        let rs = rgb.shape();
        if rs.len() != 4 || rs[0] != 3 || rs[2] != h || rs[3] != w {
            return Err(Error::dim("encode", format!("rgb input {:?}, expected (3,T,{},{})", rs, h, w)));
        }
        let mut features = self.stream(tape, pv, "rgb", rgb, pass)?;
        if self.config.encoder.mode.uses_flow() {
            let flow = flow.ok_or_else(|| Error::param("encode", "two-stream encoder needs a flow clip"))?;
            let fs = flow.shape();
            if fs.len() != 4 || fs[0] != 2 || fs[2] != h || fs[3] != w || fs[1] + 1 != rs[1] {
                return Err(Error::dim("encode", format!("flow input {:?} for rgb {:?}", fs, rs)));
            }
            let f = self.stream(tape, pv, "flow", flow, pass)?;
            features = tape.concat(features, f, 0)?;
        }
        let mean = tape.affine(features, pv.get("enc.mean.weight")?, pv.get("enc.mean.bias")?)?;
        let raw = tape.affine(features, pv.get("enc.logvar.weight")?, pv.get("enc.logvar.bias")?)?;
        let logvar = tape.clamp(raw, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1);
        Ok(EncodedVars { features, mean, logvar })
    }

    /// Splits a latent sample into the part a head reads.
    pub fn latent_part<'t>(&self, tape: &'t Tape, z: Var<'t>, part: LatentPart) -> Result<Var<'t>> {
        let half = self.config.encoder.latent_dim / 2;
        match part {
            LatentPart::Z1 => tape.narrow(z, 0, half),
            LatentPart::Z2 => tape.narrow(z, half, half),
        }
    }

    /// Generates a `(C, 1, H, W)` frame from half of the latent.
    pub fn decode_on<'t>(&self, tape: &'t Tape, pv: &ParamVars<'t>, head: HeadKind, z_part: Var<'t>) -> Result<Var<'t>> {
        let p = head_prefix(head);
        let d = &self.config.decoder;
        let half = self.config.encoder.latent_dim / 2;
        if z_part.shape() != [half] {
            return Err(Error::dim("decode", format!("latent part {:?}, head expects [{}]", z_part.shape(), half)));
        }
        let [sh, sw] = self.config.seed_hw();
        let seed = tape.affine(z_part, pv.get(&format!("{p}dense.weight"))?, pv.get(&format!("{p}dense.bias"))?)?;
        let mut x = tape.reshape(tape.relu(seed), [d.seed_channels, 1, sh, sw])?;
        let mut dims = [1, sh, sw];
        for (i, l) in d.layers.iter().enumerate() {
            let w = pv.get(&format!("{p}deconv{i}.weight"))?;
            let b = pv.get(&format!("{p}deconv{i}.bias"))?;
            for a in 0..3 {
                dims[a] = (dims[a] - 1) * l.stride[a] + l.kernel[a] - 2 * l.padding[a];
            }
            x = tape.deconv3d(x, w, b, ConvGeom::new(l.stride, l.padding), dims)?;
            x = if i + 1 == d.layers.len() { tape.sigmoid(x) } else { tape.relu(x) };
        }
        Ok(x)
    }

    /// Class probabilities from a full latent sample.
    pub fn classify_on<'t>(&self, tape: &'t Tape, pv: &ParamVars<'t>, z: Var<'t>) -> Result<Var<'t>> {
        let mut logits = tape.affine(z, pv.get("cls.weight")?, pv.get("cls.bias")?)?;
        if self.config.classifier_sigmoid {
            logits = tape.sigmoid(logits);
        }
        tape.softmax(logits)
    }

    fn encode_sample<'t>(
        &self,
        tape: &'t Tape,
        pv: &ParamVars<'t>,
        sample: &Prepared,
        t: usize,
        pass: Pass,
    ) -> Result<(EncodedVars<'t>, Var<'t>)> {
        let rgb = tape.constant(sample.observed_rgb(t)?);
        let flow = if self.config.encoder.mode.uses_flow() {
            Some(tape.constant(sample.observed_flow(t)?))
        } else {
            None
        };
        let enc = self.encode_on(tape, pv, rgb, flow, pass)?;
        let noise = pass.noise(self.config.encoder.latent_dim);
        let z = tape.reparameterize(enc.mean, enc.logvar, noise)?;
        Ok((enc, z))
    }

    /// Fused pretraining objective for one clip observed up to frame `t`.
    /// The L2 term covers the encoder and the active heads.
    pub fn pretrain_objective<'t>(
        &self,
        tape: &'t Tape,
        pv: &ParamVars<'t>,
        sample: &Prepared,
        t: usize,
        lambdas: Lambdas,
        pass: Pass,
    ) -> Result<(Var<'t>, LossBreakdown)> {
        let (enc, z) = self.encode_sample(tape, pv, sample, t, pass)?;
        let mut terms = Vec::with_capacity(self.config.heads.len());
        for &head in &self.config.heads {
            let part = self.latent_part(tape, z, self.config.part_for(head))?;
            let pred = self.decode_on(tape, pv, head, part)?;
            let target = tape.constant(sample.target(head, t)?);
            terms.push((head, pred, target));
        }
        let heads = self.config.heads.clone();
        let l2 = l2_penalty_where(tape, pv, |n| {
            is_encoder_param(n) || heads.iter().any(|h| n.starts_with(&head_prefix(*h)))
        })?;
        assemble_pretrain_loss(tape, enc.mean, enc.logvar, &terms, l2, lambdas)
    }

    /// Classification objective `L_cla + λ3·L_l2` for one labelled clip.
    pub fn classify_objective<'t>(
        &self,
        tape: &'t Tape,
        pv: &ParamVars<'t>,
        sample: &Prepared,
        t: usize,
        lambda3: f64,
        include_encoder_l2: bool,
        pass: Pass,
    ) -> Result<(Var<'t>, LossBreakdown)> {
        let label = sample.label.ok_or_else(|| Error::param("classify", format!("clip {} has no label", sample.id)))?;
        if label >= self.config.n_classes {
            return Err(Error::param("classify", format!("label {} with {} classes", label, self.config.n_classes)));
        }
        let (_, z) = self.encode_sample(tape, pv, sample, t, pass)?;
        let probs = self.classify_on(tape, pv, z)?;
        let cla = tape.cross_entropy(probs, label)?;
        let l2 = l2_penalty_where(tape, pv, |n| is_classifier_param(n) || (include_encoder_l2 && is_encoder_param(n)))?;
        let total = tape.add(cla, tape.scale(l2, lambda3))?;
        let breakdown = LossBreakdown {
            l_r: 0.0,
            l_vae: 0.0,
            l_l2: l2.item(),
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3,
            total: total.item(),
            l_cla: Some(cla.item()),
            per_head: Vec::new(),
        };
        Ok((total, breakdown))
    }

    /// Inference-mode encoding with latent noise drawn from `seed`.
    pub fn encode(&self, rgb: &Tensor, flow: Option<&Tensor>, seed: u64) -> Result<LatentCode> {
        let tape = Tape::new();
        let pv = self.params.bind(&tape, |_| false);
        let rgb = tape.constant(rgb.clone());
        let flow = flow.map(|f| tape.constant(f.clone()));
        let pass = Pass::eval(seed);
        let enc = self.encode_on(&tape, &pv, rgb, flow, pass)?;
        let noise = pass.noise(self.config.encoder.latent_dim);
        let z = tape.reparameterize(enc.mean, enc.logvar, noise.clone())?;
        Ok(LatentCode {
            mean: (*enc.mean.value()).clone(),
            logvar: (*enc.logvar.value()).clone(),
            noise,
            sample: (*z.value()).clone(),
        })
    }

    pub fn decode(&self, head: HeadKind, z_part: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let pv = self.params.bind(&tape, |_| false);
        let z = tape.constant(z_part.clone());
        Ok((*self.decode_on(&tape, &pv, head, z)?.value()).clone())
    }

    pub fn classify(&self, code: &LatentCode) -> Result<Tensor> {
        let tape = Tape::new();
        let pv = self.params.bind(&tape, |_| false);
        let z = tape.constant(code.sample.clone());
        Ok((*self.classify_on(&tape, &pv, z)?.value()).clone())
    }

    /// Predicts from the first `⌊ratio·T⌋` frames of a prepared clip.
    pub fn predict_prepared(&self, sample: &Prepared, ratio: f64, seed: u64) -> Result<(usize, Tensor)> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::param("predict", format!("ratio {} outside (0, 1]", ratio)));
        }
        let t = observed_len(ratio, sample.frames());
        if t < 2 {
            return Err(Error::param("predict", format!("ratio {} observes {} frames, need 2", ratio, t)));
        }
        let flow = sample.observed_flow(t)?;
        let code = self.encode(&sample.observed_rgb(t)?, Some(&flow), seed)?;
        let probs = self.classify(&code)?;
        Ok((argmax(probs.data()), probs))
    }

    /// Truncates the clip, computes its flow, encodes, resamples with `seed`
    /// and classifies.
    pub fn predict(&self, clip: &VideoClip, ratio: f64, seed: u64, flow: &TvL1Params) -> Result<(usize, Tensor)> {
        let part = truncate_ratio(clip, ratio)?;
        let prepared = Prepared::from_clip(&part, self.config.frame_h, self.config.frame_w, flow)?;
        self.predict_prepared(&prepared, 1.0, seed)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}
