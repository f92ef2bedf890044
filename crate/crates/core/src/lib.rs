//! Maps a speaker's audio to a listener's head-motion coefficient
//! sequence (angle, translation, expression) with a dilated causal
//! convolution stack feeding a two-layer LSTM decoder, plus the training
//! loop, checkpointing, and the evaluation metric suite around it.

pub mod audio;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod rng;
pub mod runconfig;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
