//! Run configuration: a JSON file with flat dotted keys
//! (`model.lstm_hidden`, `train.lr`, ...) plus `--set KEY=VALUE`
//! command-line overrides. Unknown keys are rejected; values are
//! validated before any work starts.

use std::path::Path;

use serde_json::Value;

use crate::audio::FrontendConfig;
use crate::error::{Error, Result};
use crate::model::{CoeffDims, ModelConfig};
use crate::train::{OptimizerConfig, TrainConfig};

/// Collected key/value settings; every field is optional so flag
/// precedence and the seed fallback chain can tell "set" from "default".
#[derive(Debug, Default, Clone)]
pub struct ConfigBag {
    // model.*
    in_dim: Option<usize>,
    residual_channels: Option<usize>,
    skip_channels: Option<usize>,
    kernel_size: Option<usize>,
    dilation_schedule: Option<Vec<usize>>,
    lstm_hidden: Option<usize>,
    angle_dim: Option<usize>,
    translation_dim: Option<usize>,
    expression_dim: Option<usize>,
    pub rng_seed: Option<u64>,
    autoregressive: Option<bool>,
    feature_norm: Option<bool>,
    // train.*
    epochs: Option<u64>,
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    clip_norm: Option<f64>,
    pub train_seed: Option<u64>,
    motion_on_angle: Option<bool>,
    // frontend.*
    window_len: Option<usize>,
    n_mels: Option<usize>,
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::config(format!("{key}: expected a non-negative integer, got {v}")))
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::config(format!("{key}: expected a non-negative integer, got {v}")))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::config(format!("{key}: expected a number, got {v}")))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::config(format!("{key}: expected true or false, got {v}")))
}

impl ConfigBag {
    /// Apply one dotted key. Unknown keys are an error naming the key.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        match key {
            "model.in_dim" => self.in_dim = Some(as_usize(key, value)?),
            "model.residual_channels" => self.residual_channels = Some(as_usize(key, value)?),
            "model.skip_channels" => self.skip_channels = Some(as_usize(key, value)?),
            "model.kernel_size" => self.kernel_size = Some(as_usize(key, value)?),
            "model.dilation_schedule" => {
                let arr = value.as_array().ok_or_else(|| {
                    Error::config(format!("{key}: expected an array of integers, got {value}"))
                })?;
                let schedule: Vec<usize> = arr
                    .iter()
                    .map(|v| as_usize(key, v))
                    .collect::<Result<_>>()?;
                self.dilation_schedule = Some(schedule);
            }
            "model.lstm_hidden" => self.lstm_hidden = Some(as_usize(key, value)?),
            "model.angle_dim" => self.angle_dim = Some(as_usize(key, value)?),
            "model.translation_dim" => self.translation_dim = Some(as_usize(key, value)?),
            "model.expression_dim" => self.expression_dim = Some(as_usize(key, value)?),
            "model.rng_seed" => self.rng_seed = Some(as_u64(key, value)?),
            "model.autoregressive" => self.autoregressive = Some(as_bool(key, value)?),
            "model.feature_norm" => self.feature_norm = Some(as_bool(key, value)?),
            "train.epochs" => self.epochs = Some(as_u64(key, value)?),
            "train.lr" => self.lr = Some(as_f64(key, value)?),
            "train.beta1" => self.beta1 = Some(as_f64(key, value)?),
            "train.beta2" => self.beta2 = Some(as_f64(key, value)?),
            "train.epsilon" => self.epsilon = Some(as_f64(key, value)?),
            "train.clip_norm" => self.clip_norm = Some(as_f64(key, value)?),
            "train.seed" => self.train_seed = Some(as_u64(key, value)?),
            "train.motion_on_angle" => self.motion_on_angle = Some(as_bool(key, value)?),
            "frontend.window_len" => self.window_len = Some(as_usize(key, value)?),
            "frontend.n_mels" => self.n_mels = Some(as_usize(key, value)?),
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Load a config file (a flat JSON object of dotted keys).
    pub fn load(path: &Path) -> Result<ConfigBag> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let root: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("config {}: invalid JSON: {e}", path.display())))?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::config(format!("config {}: expected a JSON object", path.display())))?;
        let mut bag = ConfigBag::default();
        for (key, value) in obj {
            bag.set(key, value)?;
        }
        Ok(bag)
    }

    /// Apply a `KEY=VALUE` override; the value is parsed as JSON, falling
    /// back to a bare string.
    pub fn set_kv(&mut self, pair: &str) -> Result<()> {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        let value: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set(key.trim(), &value)
    }

    /// Materialize the model configuration (validated).
    pub fn model_config(&self) -> Result<ModelConfig> {
        let defaults = ModelConfig::default();
        let cfg = ModelConfig {
            in_dim: self.in_dim.unwrap_or(defaults.in_dim),
            residual_channels: self.residual_channels.unwrap_or(defaults.residual_channels),
            skip_channels: self.skip_channels.unwrap_or(defaults.skip_channels),
            kernel_size: self.kernel_size.unwrap_or(defaults.kernel_size),
            dilation_schedule: self
                .dilation_schedule
                .clone()
                .unwrap_or(defaults.dilation_schedule),
            lstm_hidden: self.lstm_hidden.unwrap_or(defaults.lstm_hidden),
            coeff_dims: CoeffDims {
                angle: self.angle_dim.unwrap_or(3),
                translation: self.translation_dim.unwrap_or(3),
                expression: self.expression_dim.unwrap_or(64),
            },
            rng_seed: self.rng_seed.unwrap_or(0),
            autoregressive: self.autoregressive.unwrap_or(false),
            feature_norm: self.feature_norm.unwrap_or(true),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Materialize the training configuration (validated).
    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let od = OptimizerConfig::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.train_seed.unwrap_or(d.seed),
            optimizer: OptimizerConfig {
                lr: self.lr.unwrap_or(od.lr),
                beta1: self.beta1.unwrap_or(od.beta1),
                beta2: self.beta2.unwrap_or(od.beta2),
                epsilon: self.epsilon.unwrap_or(od.epsilon),
            },
            clip_norm: self.clip_norm.unwrap_or(d.clip_norm),
            motion_on_angle: self.motion_on_angle.unwrap_or(false),
            checkpoint_path: None,
        };
        for (name, v) in [
            ("train.lr", cfg.optimizer.lr),
            ("train.beta1", cfg.optimizer.beta1),
            ("train.beta2", cfg.optimizer.beta2),
            ("train.epsilon", cfg.optimizer.epsilon),
            ("train.clip_norm", cfg.clip_norm),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be a non-negative number")));
            }
        }
        if cfg.optimizer.beta1 >= 1.0 || cfg.optimizer.beta2 >= 1.0 {
            return Err(Error::config(
                "train.beta1 and train.beta2 must be < 1".to_string(),
            ));
        }
        Ok(cfg)
    }

    /// Materialize the frontend configuration (validated).
    pub fn frontend_config(&self) -> Result<FrontendConfig> {
        let d = FrontendConfig::default();
        let cfg = FrontendConfig {
            window_len: self.window_len.unwrap_or(d.window_len),
            n_mels: self.n_mels.unwrap_or(d.n_mels),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn expression_dim_explicit(&self) -> Option<usize> {
        self.expression_dim
    }
}

/// Seed fallback chain: explicit flag, then the given config value, then
/// the LISTENHEAD_SEED environment variable, then zero.
pub fn resolve_seed(flag: Option<u64>, from_config: Option<u64>) -> u64 {
    flag.or(from_config)
        .or_else(|| {
            std::env::var("LISTENHEAD_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}
