//! Composite training loss: per-frame Euclidean distances of the angle,
//! translation, and expression groups plus an inter-frame motion term on
//! translation, summed (not averaged) over all frames. Norms are plain
//! L2 norms, with subgradient zero at the exact-zero point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CoeffSequence, ModelConfig};
use crate::tape::{GradTape, NodeId};
use crate::tensor::Tensor;

/// Per-term totals; `total` is always their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub angle_term: f64,
    pub translation_term: f64,
    pub expression_term: f64,
    pub motion_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zero() -> LossBreakdown {
        LossBreakdown {
            angle_term: 0.0,
            translation_term: 0.0,
            expression_term: 0.0,
            motion_term: 0.0,
            total: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }

    pub fn scaled(&self, factor: f64) -> LossBreakdown {
        LossBreakdown {
            angle_term: self.angle_term * factor,
            translation_term: self.translation_term * factor,
            expression_term: self.expression_term * factor,
            motion_term: self.motion_term * factor,
            total: self.total * factor,
        }
    }

    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.angle_term += other.angle_term;
        self.translation_term += other.translation_term;
        self.expression_term += other.expression_term;
        self.motion_term += other.motion_term;
        self.total += other.total;
    }
}

/// Options resolving what the motion term covers.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossOptions {
    /// Extend the inter-frame motion term to the angle group as well.
    pub motion_on_angle: bool,
}

impl LossOptions {
    pub fn from_model(_cfg: &ModelConfig) -> LossOptions {
        LossOptions::default()
    }
}

/// Inter-frame differences: row 0 is zero by convention, row t is
/// `x_t - x_{t-1}`.
pub fn inter_frame_delta(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(t, row)| {
            if t == 0 {
                vec![0.0; row.len()]
            } else {
                row.iter().zip(&rows[t - 1]).map(|(a, b)| a - b).collect()
            }
        })
        .collect()
}

fn norm(diff: impl Iterator<Item = f64>) -> f64 {
    diff.map(|d| d * d).sum::<f64>().sqrt()
}

fn check_compatible(pred: &CoeffSequence, gt: &CoeffSequence) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::contract(format!(
            "loss: prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.dims() != gt.dims() {
        return Err(Error::contract(format!(
            "loss: dims mismatch {:?} vs {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    Ok(())
}

/// Evaluate the composite loss on plain sequences.
pub fn composite_loss(
    pred: &CoeffSequence,
    gt: &CoeffSequence,
    opts: &LossOptions,
) -> Result<LossBreakdown> {
    check_compatible(pred, gt)?;
    let mut out = LossBreakdown::zero();
    for t in 0..pred.len() {
        let p = pred.frame(t);
        let g = gt.frame(t);
        let mut frame = LossBreakdown::zero();
        frame.angle_term = norm(p.angle.iter().zip(&g.angle).map(|(a, b)| a - b));
        frame.translation_term = norm(
            p.translation
                .iter()
                .zip(&g.translation)
                .map(|(a, b)| a - b),
        );
        frame.expression_term = norm(p.expression.iter().zip(&g.expression).map(|(a, b)| a - b));
        if t >= 1 {
            let (pp, gp) = (pred.frame(t - 1), gt.frame(t - 1));
            let mu = |cur: &[f64], prev: &[f64], gcur: &[f64], gprev: &[f64]| {
                norm(
                    cur.iter()
                        .zip(prev)
                        .zip(gcur.iter().zip(gprev))
                        .map(|((c, cp), (gc, gcp))| (c - cp) - (gc - gcp)),
                )
            };
            frame.motion_term = mu(&p.translation, &pp.translation, &g.translation, &gp.translation);
            if opts.motion_on_angle {
                frame.motion_term += mu(&p.angle, &pp.angle, &g.angle, &gp.angle);
            }
        }
        frame.total =
            frame.angle_term + frame.translation_term + frame.expression_term + frame.motion_term;
        out.accumulate(&frame);
    }
    Ok(out)
}

/// Build the same loss on the tape from per-frame prediction nodes.
/// Returns the scalar total node plus the evaluated breakdown.
pub fn composite_loss_on_tape(
    tape: &mut GradTape,
    pred_frames: &[NodeId],
    gt: &CoeffSequence,
    opts: &LossOptions,
) -> Result<(NodeId, LossBreakdown)> {
    if pred_frames.len() != gt.len() {
        return Err(Error::contract(format!(
            "loss: prediction has {} frames, ground truth {}",
            pred_frames.len(),
            gt.len()
        )));
    }
    let dims = *gt.dims();
    let width = dims.width();
    let (a_at, t_at, e_at) = (0, dims.angle, dims.angle + dims.translation);

    let mut breakdown = LossBreakdown::zero();
    let mut terms: Vec<NodeId> = Vec::with_capacity(4 * gt.len());
    let mut prev_trans: Option<NodeId> = None;
    let mut prev_angle: Option<NodeId> = None;

    for (t, &frame) in pred_frames.iter().enumerate() {
        if tape.value(frame).len() != width {
            return Err(Error::contract(format!(
                "loss: frame {t} has width {}, expected {width}",
                tape.value(frame).len()
            )));
        }
        let g = gt.frame(t);
        let p_angle = tape.slice(frame, a_at, dims.angle)?;
        let p_trans = tape.slice(frame, t_at, dims.translation)?;
        let p_expr = tape.slice(frame, e_at, dims.expression)?;

        let g_angle = tape.leaf(Tensor::from_vec(g.angle.clone()));
        let g_trans = tape.leaf(Tensor::from_vec(g.translation.clone()));
        let g_expr = tape.leaf(Tensor::from_vec(g.expression.clone()));

        let n_angle = tape.norm_diff(p_angle, g_angle)?;
        let n_trans = tape.norm_diff(p_trans, g_trans)?;
        let n_expr = tape.norm_diff(p_expr, g_expr)?;
        breakdown.angle_term += tape.value(n_angle).item()?;
        breakdown.translation_term += tape.value(n_trans).item()?;
        breakdown.expression_term += tape.value(n_expr).item()?;
        terms.extend([n_angle, n_trans, n_expr]);

        if t >= 1 {
            let gt_mu_trans: Vec<f64> = g
                .translation
                .iter()
                .zip(&gt.frame(t - 1).translation)
                .map(|(a, b)| a - b)
                .collect();
            let mu_pred = tape.sub(p_trans, prev_trans.expect("t >= 1"))?;
            let mu_gt = tape.leaf(Tensor::from_vec(gt_mu_trans));
            let n_motion = tape.norm_diff(mu_pred, mu_gt)?;
            breakdown.motion_term += tape.value(n_motion).item()?;
            terms.push(n_motion);

            if opts.motion_on_angle {
                let gt_mu_angle: Vec<f64> = g
                    .angle
                    .iter()
                    .zip(&gt.frame(t - 1).angle)
                    .map(|(a, b)| a - b)
                    .collect();
                let mu_pred_a = tape.sub(p_angle, prev_angle.expect("t >= 1"))?;
                let mu_gt_a = tape.leaf(Tensor::from_vec(gt_mu_angle));
                let n_motion_a = tape.norm_diff(mu_pred_a, mu_gt_a)?;
                breakdown.motion_term += tape.value(n_motion_a).item()?;
                terms.push(n_motion_a);
            }
        }
        prev_trans = Some(p_trans);
        prev_angle = Some(p_angle);
    }

    let total = tape.sum_scalars(terms)?;
    breakdown.total = breakdown.angle_term
        + breakdown.translation_term
        + breakdown.expression_term
        + breakdown.motion_term;
    Ok((total, breakdown))
}
