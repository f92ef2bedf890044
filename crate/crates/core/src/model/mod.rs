//! The listener head model: a stack of dilated causal residual blocks
//! extracts deep speech features, two LSTM layers seeded from the
//! reference listener frame decode them into per-frame head-motion
//! coefficients (angle, translation, expression).

pub mod coeffs;
pub mod config;
pub mod forward;
pub mod layout;

pub use coeffs::{CoeffDims, CoeffFrame, CoeffSequence};
pub use config::ModelConfig;
pub use layout::{InitKind, ParamLayout, ParamSpec};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::tape::{GradTape, NodeId};
use crate::tensor::Tensor;

/// A constructed model: configuration, parameter layout, the flat list of
/// learnable tensors (in layout order), and the feature-normalization
/// buffers applied ahead of the input projection.
#[derive(Debug, Clone)]
pub struct ListenerHeadModel {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    params: Vec<Tensor>,
    pub feature_mean: Tensor,
    pub feature_std: Tensor,
}

impl ListenerHeadModel {
    /// Seeded initialization: weights uniform in (-s, s) with
    /// `s = 1 / sqrt(fan_in)`, biases zero except the LSTM forget gate
    /// which starts at 1.
    pub fn init(config: ModelConfig) -> Result<ListenerHeadModel> {
        config.validate()?;
        let layout = ParamLayout::build(&config);
        let mut rng = DetRng::new(config.rng_seed);
        let params: Vec<Tensor> = layout
            .specs()
            .iter()
            .map(|spec| {
                let n: usize = spec.shape.iter().product();
                let data = match spec.init {
                    InitKind::UniformFanIn(fan_in) => {
                        let s = 1.0 / (fan_in as f64).sqrt();
                        (0..n).map(|_| rng.uniform(-s, s)).collect()
                    }
                    InitKind::Zero => vec![0.0; n],
                    InitKind::LstmBias(hidden) => {
                        let mut b = vec![0.0; n];
                        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
                        b
                    }
                };
                Tensor::from_raw(spec.shape.clone(), data)
            })
            .collect();
        let in_dim = config.in_dim;
        Ok(ListenerHeadModel {
            config,
            layout,
            params,
            feature_mean: Tensor::zeros(vec![in_dim]),
            feature_std: Tensor::from_raw(vec![in_dim], vec![1.0; in_dim]),
        })
    }

    /// Rebuild a model from a flat list of parameter tensors in layout
    /// order (checkpoint loading, gradient checking).
    pub fn from_parts(
        config: ModelConfig,
        params: Vec<Tensor>,
        feature_mean: Tensor,
        feature_std: Tensor,
    ) -> Result<ListenerHeadModel> {
        config.validate()?;
        let layout = ParamLayout::build(&config);
        if params.len() != layout.specs().len() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, got {}",
                layout.specs().len(),
                params.len()
            )));
        }
        for (spec, p) in layout.specs().iter().zip(&params) {
            if p.shape() != spec.shape.as_slice() {
                return Err(Error::contract(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    spec.name,
                    p.shape(),
                    spec.shape
                )));
            }
        }
        if feature_mean.len() != config.in_dim || feature_std.len() != config.in_dim {
            return Err(Error::contract(
                "feature normalization buffers must have length in_dim".to_string(),
            ));
        }
        Ok(ListenerHeadModel {
            config,
            layout,
            params,
            feature_mean,
            feature_std,
        })
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Add small uniform noise to every parameter entry. Gradient checks
    /// run on a jittered model so the zero-initialized biases do not park
    /// ReLU pre-activations exactly on their kink, where central
    /// differences and the subgradient convention legitimately disagree.
    pub fn jitter_params(&mut self, scale: f64, seed: u64) {
        let mut rng = DetRng::new(seed);
        for p in &mut self.params {
            for v in p.data_mut() {
                *v += rng.uniform(-scale, scale);
            }
        }
    }

    /// Set the feature-normalization buffers (per-column mean and std).
    pub fn set_feature_norm(&mut self, mean: Tensor, std: Tensor) -> Result<()> {
        if mean.len() != self.config.in_dim || std.len() != self.config.in_dim {
            return Err(Error::contract(
                "feature normalization buffers must have length in_dim".to_string(),
            ));
        }
        if std.data().iter().any(|&s| s <= 0.0) {
            return Err(Error::contract(
                "feature std entries must be positive".to_string(),
            ));
        }
        self.feature_mean = mean;
        self.feature_std = std;
        Ok(())
    }

    /// Apply the stored normalization to a `[in_dim, T]` feature tensor.
    pub fn normalize_features(&self, features: &Tensor) -> Result<Tensor> {
        let shape = features.shape();
        if shape.len() != 2 || shape[0] != self.config.in_dim {
            return Err(Error::contract(format!(
                "features must be [{}, T], got {:?}",
                self.config.in_dim, shape
            )));
        }
        let t_len = shape[1];
        let mut data = features.data().to_vec();
        for c in 0..self.config.in_dim {
            let m = self.feature_mean.data()[c];
            let s = self.feature_std.data()[c];
            for v in &mut data[c * t_len..(c + 1) * t_len] {
                *v = (*v - m) / s;
            }
        }
        Ok(Tensor::from_raw(shape.to_vec(), data))
    }

    /// Insert every learnable tensor as a tape leaf, in layout order.
    pub fn bind(&self, tape: &mut GradTape) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Full inference: normalized features -> conv stack -> LSTM decode.
    /// Deterministic for fixed parameters.
    pub fn predict_tensor(
        &self,
        features: &Tensor,
        ref_frame: &CoeffFrame,
    ) -> Result<CoeffSequence> {
        let normalized = self.normalize_features(features)?;
        let mut tape = GradTape::new();
        let ids = self.bind(&mut tape);
        let frames = forward::forward_on_tape(
            &mut tape,
            &self.config,
            &self.layout,
            &ids,
            &normalized,
            ref_frame,
        )?;
        if tape.poisoned() {
            return Err(Error::numeric(
                "forward pass produced non-finite values".to_string(),
            ));
        }
        let dims = self.config.coeff_dims;
        let out = frames
            .iter()
            .map(|&id| CoeffFrame::from_flat(&dims, tape.value(id).data()))
            .collect::<Result<Vec<_>>>()?;
        CoeffSequence::new(dims, out)
    }

    /// Inference from a 45-column acoustic feature sequence.
    pub fn predict(
        &self,
        features: &crate::audio::AcousticFeatureSequence,
        ref_frame: &CoeffFrame,
    ) -> Result<CoeffSequence> {
        if self.config.in_dim != crate::audio::FEATURE_DIM {
            return Err(Error::contract(format!(
                "model expects in_dim {}, acoustic features have {}",
                self.config.in_dim,
                crate::audio::FEATURE_DIM
            )));
        }
        self.predict_tensor(&features.to_tensor(), ref_frame)
    }
}
