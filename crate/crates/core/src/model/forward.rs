//! Taped forward pass. Causality is structural: convolutions only look
//! backward in time and the LSTM unrolls forward, so outputs before time
//! `t` cannot depend on features at or after `t`.

use crate::error::{Error, Result};
use crate::tape::{GradTape, NodeId};
use crate::tensor::Tensor;

use super::layout::{BlockIdx, ConvIdx, ParamLayout};
use super::{CoeffFrame, ModelConfig};

fn conv(
    tape: &mut GradTape,
    ids: &[NodeId],
    idx: ConvIdx,
    input: NodeId,
    dilation: usize,
) -> Result<NodeId> {
    tape.conv1d_causal(input, ids[idx.weight.0], ids[idx.bias.0], dilation)
}

/// One residual block: gated dilated convolution, 1x1 residual add,
/// 1x1 skip projection.
pub fn residual_block(
    tape: &mut GradTape,
    ids: &[NodeId],
    block: &BlockIdx,
    x: NodeId,
) -> Result<(NodeId, NodeId)> {
    let f = conv(tape, ids, block.filter, x, block.dilation)?;
    let g = conv(tape, ids, block.gate, x, block.dilation)?;
    let h = tape.gated_activation(f, g)?;
    let res = conv(tape, ids, block.residual, h, 1)?;
    let residual_out = tape.add(x, res)?;
    let skip_out = conv(tape, ids, block.skip, h, 1)?;
    Ok((residual_out, skip_out))
}

/// Dilated causal stack: input projection, residual blocks with summed
/// skip paths, then ReLU -> 1x1 -> ReLU -> 1x1. Output is `[skip, T]`.
pub fn stack_forward(
    tape: &mut GradTape,
    cfg: &ModelConfig,
    layout: &ParamLayout,
    ids: &[NodeId],
    features: NodeId,
) -> Result<NodeId> {
    let shape = tape.value(features).shape();
    if shape.len() != 2 || shape[0] != cfg.in_dim {
        return Err(Error::contract(format!(
            "stack_forward: features must be [{}, T], got {shape:?}",
            cfg.in_dim
        )));
    }
    let mut x = conv(tape, ids, layout.input_proj, features, 1)?;
    let mut skip_sum: Option<NodeId> = None;
    for block in &layout.blocks {
        let (res, skip) = residual_block(tape, ids, block, x)?;
        x = res;
        skip_sum = Some(match skip_sum {
            Some(acc) => tape.add(acc, skip)?,
            None => skip,
        });
    }
    let summed = skip_sum.expect("dilation schedule is non-empty");
    let a = tape.relu(summed);
    let p1 = conv(tape, ids, layout.post1, a, 1)?;
    let b = tape.relu(p1);
    conv(tape, ids, layout.post2, b, 1)
}

/// Initial LSTM states from the reference listener frame: per layer,
/// `h0 = tanh(W_ref [angle; translation; expression] + b)`, `c0 = 0`.
pub fn embed_reference(
    tape: &mut GradTape,
    cfg: &ModelConfig,
    layout: &ParamLayout,
    ids: &[NodeId],
    ref_frame: &CoeffFrame,
) -> Result<Vec<(NodeId, NodeId)>> {
    if ref_frame.dims() != cfg.coeff_dims {
        return Err(Error::contract(format!(
            "reference frame dims {:?} do not match model coeff dims {:?}",
            ref_frame.dims(),
            cfg.coeff_dims
        )));
    }
    let ref_leaf = tape.leaf(Tensor::from_vec(ref_frame.to_flat()));
    layout
        .ref_embed
        .iter()
        .map(|embed| {
            let pre = tape.affine(ids[embed.weight.0], ref_leaf, Some(ids[embed.bias.0]))?;
            let h0 = tape.tanh(pre);
            let c0 = tape.leaf(Tensor::zeros(vec![cfg.lstm_hidden]));
            Ok((h0, c0))
        })
        .collect()
}

/// Standard LSTM cell, gate order input | forget | candidate | output.
#[allow(clippy::too_many_arguments)]
fn lstm_cell(
    tape: &mut GradTape,
    w_ih: NodeId,
    w_hh: NodeId,
    bias: NodeId,
    hidden: usize,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let from_input = tape.affine(w_ih, x, Some(bias))?;
    let from_hidden = tape.affine(w_hh, h_prev, None)?;
    let gates = tape.add(from_input, from_hidden)?;

    let i_pre = tape.slice(gates, 0, hidden)?;
    let f_pre = tape.slice(gates, hidden, hidden)?;
    let g_pre = tape.slice(gates, 2 * hidden, hidden)?;
    let o_pre = tape.slice(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h = tape.mul(o, c_act)?;
    Ok((h, c))
}

/// Unroll the two-layer decoder over the deep feature columns, seeded by
/// the reference embedding; the head maps the top hidden state to one
/// coefficient frame per step.
pub fn decode_sequence(
    tape: &mut GradTape,
    cfg: &ModelConfig,
    layout: &ParamLayout,
    ids: &[NodeId],
    deep_features: NodeId,
    ref_frame: &CoeffFrame,
) -> Result<Vec<NodeId>> {
    let shape = tape.value(deep_features).shape();
    if shape.len() != 2 || shape[0] != cfg.skip_channels {
        return Err(Error::contract(format!(
            "decode_sequence: deep features must be [{}, T], got {shape:?}",
            cfg.skip_channels
        )));
    }
    let t_len = shape[1];
    let hidden = cfg.lstm_hidden;

    let states = embed_reference(tape, cfg, layout, ids, ref_frame)?;
    let (mut h0, mut c0) = states[0];
    let (mut h1, mut c1) = states[1];
    let [lstm0, lstm1] = &layout.lstm;
    let head_w = ids[layout.head.weight.0];
    let head_b = ids[layout.head.bias.0];

    // In autoregressive mode the previous output frame is appended to the
    // first layer's input; the reference frame stands in at t = 0.
    let mut prev_out: Option<NodeId> = if cfg.autoregressive {
        Some(tape.leaf(Tensor::from_vec(ref_frame.to_flat())))
    } else {
        None
    };

    let mut outputs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let column = tape.column(deep_features, t)?;
        let x0 = match prev_out {
            Some(prev) => tape.concat(vec![column, prev])?,
            None => column,
        };
        (h0, c0) = lstm_cell(
            tape,
            ids[lstm0.w_ih.0],
            ids[lstm0.w_hh.0],
            ids[lstm0.bias.0],
            hidden,
            x0,
            h0,
            c0,
        )?;
        (h1, c1) = lstm_cell(
            tape,
            ids[lstm1.w_ih.0],
            ids[lstm1.w_hh.0],
            ids[lstm1.bias.0],
            hidden,
            h0,
            h1,
            c1,
        )?;
        let out = tape.affine(head_w, h1, Some(head_b))?;
        if cfg.autoregressive {
            prev_out = Some(out);
        }
        outputs.push(out);
    }
    Ok(outputs)
}

/// Full forward: conv stack then decoder, returning one `[coeff_width]`
/// node per frame. `features` must already be normalized.
pub fn forward_on_tape(
    tape: &mut GradTape,
    cfg: &ModelConfig,
    layout: &ParamLayout,
    ids: &[NodeId],
    features: &Tensor,
    ref_frame: &CoeffFrame,
) -> Result<Vec<NodeId>> {
    let feat = tape.leaf(features.clone());
    let deep = stack_forward(tape, cfg, layout, ids, feat)?;
    decode_sequence(tape, cfg, layout, ids, deep, ref_frame)
}
