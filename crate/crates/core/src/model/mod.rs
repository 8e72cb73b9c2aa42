//! The FL-VAE network: two-stream 3D-conv encoder with SPP, a 12-d latent,
//! deconvolution decoder heads and a softmax classifier.

mod checkpoint;
mod config;
mod loss;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ConvLayer, DeconvLayer, DecoderConfig, EncoderConfig, EncoderMode, HeadKind, LatentPart, ModelConfig};
pub use loss::{assemble_pretrain_loss, Lambdas, LossBreakdown, FRAME_ELEMENTS};
pub use network::{
    argmax, head_prefix, is_classifier_param, is_encoder_param, time_prefix, time_window, EncodedVars, FlVae,
    LatentCode, Pass, Prepared, LOGVAR_CLAMP,
};
pub use params::{is_weight, l2_penalty, l2_penalty_where, ParamVars, ParameterSet};
