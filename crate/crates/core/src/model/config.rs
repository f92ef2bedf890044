use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::CoeffDims;

/// Architecture hyperparameters. Parameter shapes are a pure function of
/// this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature channels (45 acoustic features).
    pub in_dim: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub kernel_size: usize,
    /// Per-block dilations, e.g. `[1, 2, 4, 1, 2, 4]` for two stacks.
    pub dilation_schedule: Vec<usize>,
    pub lstm_hidden: usize,
    pub coeff_dims: CoeffDims,
    pub rng_seed: u64,
    /// Feed the previous output frame back into the first LSTM layer.
    /// Off by default: the decoder conditions on the reference frame only.
    #[serde(default)]
    pub autoregressive: bool,
    /// Standardize input features with stored per-column mean/std.
    #[serde(default = "default_true")]
    pub feature_norm: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_dim: crate::audio::FEATURE_DIM,
            residual_channels: 64,
            skip_channels: 128,
            kernel_size: 2,
            dilation_schedule: vec![1, 2, 4, 1, 2, 4],
            lstm_hidden: 128,
            coeff_dims: CoeffDims::default(),
            rng_seed: 0,
            autoregressive: false,
            feature_norm: true,
        }
    }
}

impl ModelConfig {
    /// Small configuration used throughout the test suite.
    pub fn tiny(expression_dim: usize) -> ModelConfig {
        ModelConfig {
            in_dim: crate::audio::FEATURE_DIM,
            residual_channels: 4,
            skip_channels: 4,
            kernel_size: 2,
            dilation_schedule: vec![1, 2],
            lstm_hidden: 5,
            coeff_dims: CoeffDims {
                angle: 3,
                translation: 3,
                expression: expression_dim,
            },
            rng_seed: 0,
            autoregressive: false,
            feature_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.in_dim", self.in_dim),
            ("model.residual_channels", self.residual_channels),
            ("model.skip_channels", self.skip_channels),
            ("model.kernel_size", self.kernel_size),
            ("model.lstm_hidden", self.lstm_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.dilation_schedule.is_empty() {
            return Err(Error::config(
                "model.dilation_schedule must not be empty".to_string(),
            ));
        }
        if self.dilation_schedule.contains(&0) {
            return Err(Error::config(
                "model.dilation_schedule values must be >= 1".to_string(),
            ));
        }
        self.coeff_dims.validate()
    }

    /// Timesteps of past context one output can see through the conv
    /// stack: `1 + (K - 1) * sum(dilations)`.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilation_schedule.iter().sum::<usize>()
    }

    /// Closed-form learnable parameter count.
    pub fn param_count(&self) -> usize {
        let (r, s, k, h) = (
            self.residual_channels,
            self.skip_channels,
            self.kernel_size,
            self.lstm_hidden,
        );
        let w = self.coeff_dims.width();
        let input_proj = r * self.in_dim + r;
        let per_block = 2 * (r * r * k + r) + (r * r + r) + (s * r + s);
        let post = 2 * (s * s + s);
        let lstm0_in = if self.autoregressive { s + w } else { s };
        let lstm0 = 4 * h * lstm0_in + 4 * h * h + 4 * h;
        let lstm1 = 4 * h * h + 4 * h * h + 4 * h;
        let ref_embed = 2 * (h * w + h);
        let head = w * h + w;
        input_proj
            + per_block * self.dilation_schedule.len()
            + post
            + lstm0
            + lstm1
            + ref_embed
            + head
    }
}
