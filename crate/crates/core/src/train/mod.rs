//! Training loop: per-clip forward, composite loss, backward, clipped
//! Adam updates, per-epoch checkpointing. Fully deterministic for a
//! fixed seed, dataset, and configuration.

pub mod checkpoint;
pub mod loss;
pub mod optimizer;

use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{forward, CoeffFrame, CoeffSequence, ListenerHeadModel};
use crate::rng::DetRng;
use crate::tape::GradTape;
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{composite_loss, composite_loss_on_tape, inter_frame_delta, LossBreakdown, LossOptions};
pub use optimizer::{clip_global_norm, OptimizerConfig, OptimizerState};

/// One training example: raw features, ground-truth coefficients, and the
/// reference listener frame.
#[derive(Debug, Clone)]
pub struct TrainClip {
    pub id: String,
    pub features: Tensor,
    pub coeffs: CoeffSequence,
    pub ref_frame: CoeffFrame,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: u64,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Global-norm gradient clip threshold; 0 disables clipping.
    pub clip_norm: f64,
    pub motion_on_angle: bool,
    /// Checkpoint written after each epoch when set.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            clip_norm: 5.0,
            motion_on_angle: false,
            checkpoint_path: None,
        }
    }
}

/// Per-epoch averages (per clip); `mean_per_frame` divides the summed
/// total by the number of frames instead, for comparability across clip
/// lengths.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub angle: f64,
    pub translation: f64,
    pub expression: f64,
    pub motion: f64,
    pub total: f64,
    pub mean_per_frame: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

/// Mutable training state; checkpoints capture exactly this.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: ListenerHeadModel,
    pub optimizer: OptimizerState,
    pub rng: DetRng,
    pub epoch: u64,
}

impl TrainState {
    pub fn new(model: ListenerHeadModel, cfg: &TrainConfig) -> TrainState {
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();
        TrainState {
            optimizer: OptimizerState::new(&shapes, cfg.optimizer),
            rng: DetRng::new(cfg.seed),
            epoch: 0,
            model,
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> TrainState {
        TrainState {
            model: ckpt.model,
            optimizer: ckpt.optimizer,
            rng: ckpt.rng,
            epoch: ckpt.epoch,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            rng: self.rng,
            epoch: self.epoch,
        }
    }
}

fn validate_dataset(model: &ListenerHeadModel, clips: &[TrainClip]) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::data("training dataset is empty".to_string()));
    }
    for clip in clips {
        let shape = clip.features.shape();
        if shape.len() != 2 || shape[0] != model.config.in_dim {
            return Err(Error::data(format!(
                "clip {}: features must be [{}, T], got {shape:?}",
                clip.id, model.config.in_dim
            )));
        }
        if clip.coeffs.dims() != &model.config.coeff_dims {
            return Err(Error::data(format!(
                "clip {}: coefficient dims {:?} do not match model {:?}",
                clip.id,
                clip.coeffs.dims(),
                model.config.coeff_dims
            )));
        }
        if clip.coeffs.len() != shape[1] {
            return Err(Error::data(format!(
                "clip {}: {} coefficient frames vs {} feature frames",
                clip.id,
                clip.coeffs.len(),
                shape[1]
            )));
        }
        if clip.ref_frame.dims() != model.config.coeff_dims {
            return Err(Error::data(format!(
                "clip {}: reference frame dims do not match model",
                clip.id
            )));
        }
    }
    Ok(())
}

/// Per-column mean and standard deviation over every frame of every clip.
fn feature_statistics(clips: &[TrainClip], in_dim: usize) -> (Tensor, Tensor) {
    let mut sums = vec![0.0; in_dim];
    let mut sq_sums = vec![0.0; in_dim];
    let mut count = 0usize;
    for clip in clips {
        let t_len = clip.features.shape()[1];
        let data = clip.features.data();
        for c in 0..in_dim {
            for t in 0..t_len {
                let v = data[c * t_len + t];
                sums[c] += v;
                sq_sums[c] += v * v;
            }
        }
        count += t_len;
    }
    let n = count.max(1) as f64;
    let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sq_sums
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0)).sqrt().max(1e-6))
        .collect();
    (Tensor::from_raw(vec![in_dim], mean), Tensor::from_raw(vec![in_dim], std))
}

/// Gradient-check the full model plus composite loss on a seeded random
/// clip of `t_len` frames: every parameter's analytic gradient against
/// central differences. The check runs on a jittered copy of the model so
/// the zero-initialized biases do not sit exactly on ReLU kinks, where
/// the subgradient convention and finite differences legitimately differ.
pub fn grad_check_model(
    model: &ListenerHeadModel,
    t_len: usize,
    seed: u64,
    epsilon: f64,
    tolerance: f64,
) -> Result<crate::gradcheck::GradCheckReport> {
    let mut probe = model.clone();
    probe.jitter_params(0.15, seed.wrapping_mul(0x9e3779b9).wrapping_add(1));
    let cfg = probe.config.clone();
    let layout = probe.layout.clone();
    let dims = cfg.coeff_dims;

    let mut rng = DetRng::new(seed);
    let features = Tensor::from_raw(
        vec![cfg.in_dim, t_len],
        (0..cfg.in_dim * t_len)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect(),
    );
    let gt_frames = (0..t_len)
        .map(|_| {
            let flat: Vec<f64> = (0..dims.width()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            CoeffFrame::from_flat(&dims, &flat)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt = CoeffSequence::new(dims, gt_frames)?;
    let ref_flat: Vec<f64> = (0..dims.width()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let ref_frame = CoeffFrame::from_flat(&dims, &ref_flat)?;

    let f = move |tape: &mut GradTape, ids: &[crate::tape::NodeId]| {
        let frames = forward::forward_on_tape(tape, &cfg, &layout, ids, &features, &ref_frame)?;
        composite_loss_on_tape(tape, &frames, &gt, &LossOptions::default()).map(|(node, _)| node)
    };
    crate::gradcheck::grad_check(&f, probe.params(), epsilon, tolerance)
}

/// Run training from `state.epoch` up to `cfg.epochs`, checkpointing
/// after every epoch. On a non-finite loss the run aborts without
/// touching the last written checkpoint.
pub fn train(
    state: &mut TrainState,
    clips: &[TrainClip],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    validate_dataset(&state.model, clips)?;
    let opts = LossOptions {
        motion_on_angle: cfg.motion_on_angle,
    };
    let names: Vec<String> = state
        .model
        .layout
        .specs()
        .iter()
        .map(|s| s.name.clone())
        .collect();

    if state.epoch == 0 && state.model.config.feature_norm {
        let (mean, std) = feature_statistics(clips, state.model.config.in_dim);
        state.model.set_feature_norm(mean, std)?;
    }

    let mut report = TrainReport { epochs: Vec::new() };
    for _ in state.epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..clips.len()).collect();
        state.rng.shuffle(&mut order);

        let mut sums = LossBreakdown::zero();
        let mut total_frames = 0usize;
        for &ci in &order {
            let clip = &clips[ci];
            let normalized = state.model.normalize_features(&clip.features)?;
            let mut tape = GradTape::new();
            let ids = state.model.bind(&mut tape);
            let frames = forward::forward_on_tape(
                &mut tape,
                &state.model.config,
                &state.model.layout,
                &ids,
                &normalized,
                &clip.ref_frame,
            )?;
            let (total_node, breakdown) =
                composite_loss_on_tape(&mut tape, &frames, &clip.coeffs, &opts)?;
            if !breakdown.is_finite() || tape.poisoned() {
                return Err(Error::numeric(format!(
                    "non-finite loss on clip {} (epoch {}); last checkpoint retained",
                    clip.id,
                    state.epoch + 1
                )));
            }
            tape.backward(total_node)?;
            let mut grads: Vec<Tensor> = ids.iter().map(|&id| tape.grad(id)).collect();
            clip_global_norm(&mut grads, cfg.clip_norm);
            state
                .optimizer
                .apply(state.model.params_mut(), &grads, |i| names[i].clone())?;
            sums.accumulate(&breakdown);
            total_frames += clip.coeffs.len();
        }

        state.epoch += 1;
        let mean = sums.scaled(1.0 / clips.len() as f64);
        report.epochs.push(EpochStats {
            epoch: state.epoch,
            angle: mean.angle_term,
            translation: mean.translation_term,
            expression: mean.expression_term,
            motion: mean.motion_term,
            total: mean.total,
            mean_per_frame: sums.total / total_frames.max(1) as f64,
        });
        if let Some(path) = &cfg.checkpoint_path {
            save_checkpoint(&state.to_checkpoint(), path)?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoeffDims, ModelConfig};

    fn synthetic_clips(model: &ListenerHeadModel, n: usize, t_len: usize) -> Vec<TrainClip> {
        let mut rng = DetRng::new(40);
        let dims = model.config.coeff_dims;
        (0..n)
            .map(|i| {
                let features = Tensor::from_raw(
                    vec![model.config.in_dim, t_len],
                    (0..model.config.in_dim * t_len)
                        .map(|_| rng.uniform(-1.0, 1.0))
                        .collect(),
                );
                let frames = (0..t_len)
                    .map(|t| {
                        let flat: Vec<f64> = (0..dims.width())
                            .map(|k| 0.2 * ((t + k) as f64 * 0.3).sin())
                            .collect();
                        CoeffFrame::from_flat(&dims, &flat).unwrap()
                    })
                    .collect();
                TrainClip {
                    id: format!("clip{i}"),
                    features,
                    coeffs: CoeffSequence::new(dims, frames).unwrap(),
                    ref_frame: CoeffFrame::zeros(&dims),
                }
            })
            .collect()
    }

    fn tiny() -> ListenerHeadModel {
        let mut cfg = ModelConfig::tiny(4);
        cfg.in_dim = 6;
        ListenerHeadModel::init(cfg).unwrap()
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let model = tiny();
        let clips = synthetic_clips(&model, 3, 5);
        let cfg = TrainConfig {
            epochs: 3,
            optimizer: OptimizerConfig {
                lr: 0.0,
                ..OptimizerConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut state = TrainState::new(model, &cfg);
        let report = train(&mut state, &clips, &cfg).unwrap();
        assert_eq!(report.epochs.len(), 3);
        let first = report.epochs[0].total;
        for e in &report.epochs {
            assert_eq!(e.total, first);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = TrainConfig {
            epochs: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let model = tiny();
            let clips = synthetic_clips(&model, 3, 5);
            let mut state = TrainState::new(model, &cfg);
            train(&mut state, &clips, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert_eq!(x.total, y.total);
        }
    }

    #[test]
    fn training_reduces_loss() {
        let model = tiny();
        let clips = synthetic_clips(&model, 2, 6);
        let cfg = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let mut state = TrainState::new(model, &cfg);
        let report = train(&mut state, &clips, &cfg).unwrap();
        let first = report.epochs.first().unwrap().total;
        let last = report.epochs.last().unwrap().total;
        assert!(
            last < 0.5 * first,
            "loss did not drop: first {first}, last {last}"
        );
    }

    #[test]
    fn empty_dataset_rejected() {
        let model = tiny();
        let cfg = TrainConfig::default();
        let mut state = TrainState::new(model, &cfg);
        assert!(train(&mut state, &[], &cfg).is_err());
    }

    #[test]
    fn dim_mismatch_names_clip() {
        let model = tiny();
        let mut clips = synthetic_clips(&model, 2, 5);
        clips[1].coeffs = CoeffSequence::new(
            CoeffDims {
                angle: 3,
                translation: 3,
                expression: 7,
            },
            vec![],
        )
        .unwrap();
        let cfg = TrainConfig::default();
        let mut state = TrainState::new(model, &cfg);
        let err = train(&mut state, &clips, &cfg).unwrap_err();
        assert!(err.to_string().contains("clip1"));
    }

    #[test]
    fn non_finite_loss_aborts_and_retains_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt_path = dir.path().join("keep.ckpt");
        let model = tiny();
        let clips = synthetic_clips(&model, 2, 4);
        let cfg = TrainConfig {
            epochs: 2,
            checkpoint_path: Some(ckpt_path.clone()),
            ..TrainConfig::default()
        };
        let mut state = TrainState::new(model, &cfg);
        train(&mut state, &clips, &cfg).unwrap();
        let good_bytes = std::fs::read(&ckpt_path).unwrap();

        // Inject an infinite feature value; the forward pass poisons the
        // tape and training must abort without touching the checkpoint.
        let mut poisoned = clips.clone();
        let shape = poisoned[0].features.shape().to_vec();
        let mut data = poisoned[0].features.data().to_vec();
        data[3] = f64::INFINITY;
        poisoned[0].features = Tensor::from_raw(shape, data);
        let cfg_more = TrainConfig {
            epochs: 4,
            ..cfg.clone()
        };
        let err = train(&mut state, &poisoned, &cfg_more).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        assert!(err.to_string().contains("last checkpoint retained"));
        assert_eq!(std::fs::read(&ckpt_path).unwrap(), good_bytes);
    }

    #[test]
    fn resume_equals_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt_path = dir.path().join("t.ckpt");

        // Uninterrupted: 6 epochs.
        let cfg_full = TrainConfig {
            epochs: 6,
            seed: 3,
            checkpoint_path: Some(ckpt_path.clone()),
            ..TrainConfig::default()
        };
        let model = tiny();
        let clips = synthetic_clips(&model, 3, 5);
        let mut full = TrainState::new(model, &cfg_full);
        train(&mut full, &clips, &cfg_full).unwrap();
        let full_bytes = checkpoint::encode_checkpoint(&full.to_checkpoint()).unwrap();

        // Interrupted: 3 epochs, reload from file, 3 more.
        let cfg_half = TrainConfig {
            epochs: 3,
            ..cfg_full.clone()
        };
        let mut half = TrainState::new(tiny(), &cfg_half);
        train(&mut half, &clips, &cfg_half).unwrap();
        let mut resumed = TrainState::from_checkpoint(load_checkpoint(&ckpt_path).unwrap());
        assert_eq!(resumed.epoch, 3);
        train(&mut resumed, &clips, &cfg_full).unwrap();
        let resumed_bytes = checkpoint::encode_checkpoint(&resumed.to_checkpoint()).unwrap();

        assert_eq!(full_bytes, resumed_bytes);
    }
}
