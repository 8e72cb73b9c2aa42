//! Future-looking variational encoder for early action prediction.
//!
//! A two-stream (RGB + optical flow) 3D-convolutional encoder maps a
//! partially observed clip to a 12-dimensional Gaussian latent. During
//! pretraining several decoder heads generate future frames and flow from
//! that latent; afterwards a softmax classifier predicts the action from it.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod model;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
