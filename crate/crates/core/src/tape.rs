//! Reverse-mode gradient tape over whole tensors.
//!
//! Every differentiable operation appends one node holding the output
//! value and a record of its inputs. `backward` walks the nodes in exact
//! reverse execution order and accumulates vector-Jacobian products, so a
//! parameter used several times receives the sum of all contributions and
//! a parameter on no path to the output keeps an exact zero gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`GradTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Causal dilated 1-D convolution: input `[C_in, T]`, weight
    /// `[C_out, C_in, K]`, bias `[C_out]` -> `[C_out, T]`.
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dilation: usize,
    },
    /// weight `[D_out, D_in]` x input `[D_in]` (+ optional bias `[D_out]`).
    Affine {
        weight: NodeId,
        input: NodeId,
        bias: Option<NodeId>,
    },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Tanh { a: NodeId },
    Sigmoid { a: NodeId },
    Relu { a: NodeId },
    /// Column `t` of a `[C, T]` tensor -> `[C]`.
    Column { input: NodeId, index: usize },
    /// Contiguous 1-D slice `[start, start+len)`.
    Slice { input: NodeId, start: usize, len: usize },
    /// Concatenation of 1-D tensors.
    Concat { parts: Vec<NodeId> },
    /// Euclidean distance `||a - b||_2` -> scalar. The gradient at the
    /// exact-zero point is defined as zero.
    NormDiff { a: NodeId, b: NodeId },
    /// Sum of scalar nodes -> scalar.
    SumScalars { parts: Vec<NodeId> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of executed differentiable operations.
pub struct GradTape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    poisoned: bool,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> GradTape {
        GradTape {
            nodes: Vec::new(),
            grads: Vec::new(),
            poisoned: false,
        }
    }

    /// True once any op produced a non-finite value. Values keep
    /// propagating so the caller can abort cleanly at a checkpoint.
    pub fn poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert an input or parameter value.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated for `id` by the last `backward` call.
    /// Nodes off every path to the output hold exact zeros.
    pub fn grad(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[id.0].value.shape().to_vec()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        if !matches!(op, Op::Leaf) && !value.all_finite() {
            self.poisoned = true;
        }
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    // ---- forward ops -------------------------------------------------

    /// Causal dilated convolution. Output position `t` depends only on
    /// input positions `t - k*dilation` for `0 <= k < K`; taps before
    /// time zero contribute nothing (implicit left zero-padding).
    pub fn conv1d_causal(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dilation: usize,
    ) -> Result<NodeId> {
        let value = conv1d_causal_dilated(
            self.value(input),
            self.value(weight),
            self.value(bias),
            dilation,
        )?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            },
        ))
    }

    pub fn affine(&mut self, weight: NodeId, input: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let value = affine(
            self.value(weight),
            self.value(input),
            bias.map(|b| self.value(b)),
        )?;
        Ok(self.push(value, Op::Affine { weight, input, bias }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(data, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("sub", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(data, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(data, Op::Mul { a, b }))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let data = map(self.value(a), f64::tanh);
        self.push(data, Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = map(self.value(a), sigmoid);
        self.push(data, Op::Sigmoid { a })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(data, Op::Relu { a })
    }

    /// Elementwise `tanh(x_f) * sigmoid(x_g)`; the gated activation of the
    /// residual blocks. Output is strictly inside (-1, 1).
    pub fn gated_activation(&mut self, x_f: NodeId, x_g: NodeId) -> Result<NodeId> {
        self.check_same_shape("gated_activation", x_f, x_g)?;
        let t = self.tanh(x_f);
        let s = self.sigmoid(x_g);
        self.mul(t, s)
    }

    pub fn column(&mut self, input: NodeId, index: usize) -> Result<NodeId> {
        let shape = self.shape(input);
        if shape.len() != 2 {
            return Err(Error::contract(format!(
                "column() expects a 2-D tensor, got shape {shape:?}"
            )));
        }
        let (rows, cols) = (shape[0], shape[1]);
        if index >= cols {
            return Err(Error::contract(format!(
                "column index {index} out of range for {cols} columns"
            )));
        }
        let src = self.value(input).data();
        let data: Vec<f64> = (0..rows).map(|r| src[r * cols + index]).collect();
        Ok(self.push(
            Tensor::from_raw(vec![rows], data),
            Op::Column { input, index },
        ))
    }

    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.value(input).len();
        if self.shape(input).len() != 1 || start + len > n {
            return Err(Error::contract(format!(
                "slice [{start}, {}) out of range for 1-D tensor of length {n}",
                start + len
            )));
        }
        let data = self.value(input).data()[start..start + len].to_vec();
        Ok(self.push(
            Tensor::from_raw(vec![len], data),
            Op::Slice { input, start, len },
        ))
    }

    /// Concatenate 1-D tensors in order.
    pub fn concat(&mut self, parts: Vec<NodeId>) -> Result<NodeId> {
        let mut data = Vec::new();
        for &p in &parts {
            if self.shape(p).len() != 1 {
                return Err(Error::contract(format!(
                    "concat() expects 1-D tensors, got shape {:?}",
                    self.shape(p)
                )));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let n = data.len();
        Ok(self.push(Tensor::from_raw(vec![n], data), Op::Concat { parts }))
    }

    /// `||a - b||_2` as a scalar node.
    pub fn norm_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("norm_diff", a, b)?;
        let sq: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Tensor::scalar(sq.sqrt()), Op::NormDiff { a, b }))
    }

    pub fn sum_scalars(&mut self, parts: Vec<NodeId>) -> Result<NodeId> {
        let mut total = 0.0;
        for &p in &parts {
            total += self.value(p).item()?;
        }
        Ok(self.push(Tensor::scalar(total), Op::SumScalars { parts }))
    }

    // ---- backward ----------------------------------------------------

    /// Accumulate `d output / d node` for every node on the tape, seeding
    /// the given scalar output with 1. Errors if the seed is not a scalar.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward() seed must be a scalar, got shape {:?}",
                self.shape(output)
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            let go = match &self.grads[idx] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    dilation,
                } => {
                    let (input, weight, bias, dilation) = (*input, *weight, *bias, *dilation);
                    let (gx, gw, gb) = conv1d_backward(
                        &go,
                        self.value(input),
                        self.value(weight),
                        dilation,
                    );
                    self.accumulate(input, gx);
                    self.accumulate(weight, gw);
                    self.accumulate(bias, gb);
                }
                Op::Affine { weight, input, bias } => {
                    let (weight, input, bias) = (*weight, *input, *bias);
                    let w = self.value(weight);
                    let x = self.value(input);
                    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
                    let mut gw = vec![0.0; d_out * d_in];
                    let mut gx = vec![0.0; d_in];
                    for i in 0..d_out {
                        let gi = go.data()[i];
                        for j in 0..d_in {
                            gw[i * d_in + j] += gi * x.data()[j];
                            gx[j] += gi * w.data()[i * d_in + j];
                        }
                    }
                    self.accumulate(weight, Tensor::from_raw(vec![d_out, d_in], gw));
                    self.accumulate(input, Tensor::from_raw(vec![d_in], gx));
                    if let Some(b) = bias {
                        self.accumulate(b, go.clone());
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, go.clone());
                    self.accumulate(b, go);
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    let neg = Tensor::from_raw(
                        go.shape().to_vec(),
                        go.data().iter().map(|v| -v).collect(),
                    );
                    self.accumulate(a, go);
                    self.accumulate(b, neg);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let ga = zip_map_raw(&go, self.value(b), |g, y| g * y);
                    let gb = zip_map_raw(&go, self.value(a), |g, x| g * x);
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let out = &self.nodes[idx].value;
                    let g = zip_map_raw(&go, out, |g, y| g * (1.0 - y * y));
                    self.accumulate(a, g);
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let out = &self.nodes[idx].value;
                    let g = zip_map_raw(&go, out, |g, y| g * y * (1.0 - y));
                    self.accumulate(a, g);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let pre = self.value(a);
                    let g = zip_map_raw(&go, pre, |g, x| if x > 0.0 { g } else { 0.0 });
                    self.accumulate(a, g);
                }
                Op::Column { input, index } => {
                    let (input, index) = (*input, *index);
                    let shape = self.shape(input).to_vec();
                    let (rows, cols) = (shape[0], shape[1]);
                    let mut gx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        gx[r * cols + index] = go.data()[r];
                    }
                    self.accumulate(input, Tensor::from_raw(shape, gx));
                }
                Op::Slice { input, start, len } => {
                    let (input, start, len) = (*input, *start, *len);
                    let n = self.value(input).len();
                    let mut gx = vec![0.0; n];
                    gx[start..start + len].copy_from_slice(go.data());
                    self.accumulate(input, Tensor::from_raw(vec![n], gx));
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(p).len();
                        let piece = go.data()[offset..offset + len].to_vec();
                        self.accumulate(p, Tensor::from_raw(vec![len], piece));
                        offset += len;
                    }
                }
                Op::NormDiff { a, b } => {
                    let (a, b) = (*a, *b);
                    let out = self.nodes[idx].value.data()[0];
                    let g = go.data()[0];
                    let shape = self.shape(a).to_vec();
                    let n = self.value(a).len();
                    let mut ga = vec![0.0; n];
                    let mut gb = vec![0.0; n];
                    // Subgradient 0 at the exact-zero point.
                    if out > 0.0 {
                        let xa = self.value(a).data();
                        let xb = self.value(b).data();
                        for i in 0..n {
                            let d = g * (xa[i] - xb[i]) / out;
                            ga[i] = d;
                            gb[i] = -d;
                        }
                    }
                    self.accumulate(a, Tensor::from_raw(shape.clone(), ga));
                    self.accumulate(b, Tensor::from_raw(shape, gb));
                }
                Op::SumScalars { parts } => {
                    let parts = parts.clone();
                    let g = go.data()[0];
                    for p in parts {
                        self.accumulate(p, Tensor::scalar(g));
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        match &mut self.grads[id.0] {
            Some(g) => {
                for (dst, src) in g.data_mut().iter_mut().zip(delta.data()) {
                    *dst += src;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn check_same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::contract(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }
}

// ---- plain (untaped) kernels -----------------------------------------

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Causal dilated 1-D convolution on plain tensors.
///
/// `out[co][t] = bias[co] + sum_{ci,k} w[co][ci][k] * x[ci][t - k*d]`,
/// with out-of-range taps contributing zero. Output length equals input
/// length.
pub fn conv1d_causal_dilated(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    if dilation < 1 {
        return Err(Error::contract("conv1d: dilation must be >= 1".to_string()));
    }
    let (ws, xs) = (weight.shape(), input.shape());
    if ws.len() != 3 || xs.len() != 2 {
        return Err(Error::contract(format!(
            "conv1d: weight must be [C_out, C_in, K] and input [C_in, T], got {ws:?} and {xs:?}"
        )));
    }
    let (c_out, c_in, k) = (ws[0], ws[1], ws[2]);
    if k < 1 {
        return Err(Error::contract("conv1d: kernel size must be >= 1".to_string()));
    }
    let (xc, t_len) = (xs[0], xs[1]);
    if t_len < 1 {
        return Err(Error::contract("conv1d: input length must be >= 1".to_string()));
    }
    if xc != c_in {
        return Err(Error::contract(format!(
            "conv1d: input channels {xc} do not match weight C_in {c_in}"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::contract(format!(
            "conv1d: bias shape {:?} does not match C_out {c_out}",
            bias.shape()
        )));
    }

    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0; c_out * t_len];
    for co in 0..c_out {
        let b = bias.data()[co];
        let row = &mut out[co * t_len..(co + 1) * t_len];
        for v in row.iter_mut() {
            *v = b;
        }
        for ci in 0..c_in {
            let xrow = &x[ci * t_len..(ci + 1) * t_len];
            for kk in 0..k {
                let wv = w[(co * c_in + ci) * k + kk];
                let shift = kk * dilation;
                if shift >= t_len {
                    continue;
                }
                for t in shift..t_len {
                    row[t] += wv * xrow[t - shift];
                }
            }
        }
    }
    Ok(Tensor::from_raw(vec![c_out, t_len], out))
}

fn conv1d_backward(
    go: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    dilation: usize,
) -> (Tensor, Tensor, Tensor) {
    let ws = weight.shape();
    let (c_out, c_in, k) = (ws[0], ws[1], ws[2]);
    let t_len = input.shape()[1];
    let x = input.data();
    let w = weight.data();
    let g = go.data();

    let mut gx = vec![0.0; c_in * t_len];
    let mut gw = vec![0.0; c_out * c_in * k];
    let mut gb = vec![0.0; c_out];

    for co in 0..c_out {
        let grow = &g[co * t_len..(co + 1) * t_len];
        gb[co] += grow.iter().sum::<f64>();
        for ci in 0..c_in {
            let xrow = &x[ci * t_len..(ci + 1) * t_len];
            let gxrow = &mut gx[ci * t_len..(ci + 1) * t_len];
            for kk in 0..k {
                let shift = kk * dilation;
                if shift >= t_len {
                    continue;
                }
                let wv = w[(co * c_in + ci) * k + kk];
                let mut acc = 0.0;
                for t in shift..t_len {
                    acc += grow[t] * xrow[t - shift];
                    gxrow[t - shift] += grow[t] * wv;
                }
                gw[(co * c_in + ci) * k + kk] += acc;
            }
        }
    }
    (
        Tensor::from_raw(vec![c_in, t_len], gx),
        Tensor::from_raw(vec![c_out, c_in, k], gw),
        Tensor::from_raw(vec![c_out], gb),
    )
}

/// Matrix-vector product with optional bias: `W x + b`.
pub fn affine(weight: &Tensor, input: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let ws = weight.shape();
    if ws.len() != 2 || input.shape().len() != 1 {
        return Err(Error::contract(format!(
            "affine: weight must be [D_out, D_in] and input [D_in], got {:?} and {:?}",
            ws,
            input.shape()
        )));
    }
    let (d_out, d_in) = (ws[0], ws[1]);
    if input.len() != d_in {
        return Err(Error::contract(format!(
            "affine: input length {} does not match D_in {d_in}",
            input.len()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(Error::contract(format!(
                "affine: bias shape {:?} does not match D_out {d_out}",
                b.shape()
            )));
        }
    }
    let w = weight.data();
    let x = input.data();
    let mut out = vec![0.0; d_out];
    for i in 0..d_out {
        let mut acc = match bias {
            Some(b) => b.data()[i],
            None => 0.0,
        };
        let row = &w[i * d_in..(i + 1) * d_in];
        for j in 0..d_in {
            acc += row[j] * x[j];
        }
        out[i] = acc;
    }
    Ok(Tensor::from_raw(vec![d_out], out))
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_raw(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    zip_map_raw(a, b, f)
}

fn zip_map_raw(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    Tensor::from_raw(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_1ch(input: &[f64], weights: &[f64], bias: f64, dilation: usize) -> Vec<f64> {
        let x = Tensor::new(vec![1, input.len()], input.to_vec()).unwrap();
        let w = Tensor::new(vec![1, 1, weights.len()], weights.to_vec()).unwrap();
        let b = Tensor::new(vec![1], vec![bias]).unwrap();
        conv1d_causal_dilated(&x, &w, &b, dilation)
            .unwrap()
            .data()
            .to_vec()
    }

    #[test]
    fn conv_identity_kernel() {
        let input = [0.5, -1.0, 2.0, 0.25];
        let out = conv_1ch(&input, &[1.0], 0.0, 1);
        assert_eq!(out, input.to_vec());
    }

    #[test]
    fn conv_impulse_reads_off_weights() {
        // w_k multiplies x_{t - k*d}: impulse at t=5 lands w0 at 5, w1 at 7.
        let mut input = vec![0.0; 12];
        input[5] = 1.0;
        let out = conv_1ch(&input, &[3.0, -2.0], 0.0, 2);
        let mut expected = vec![0.0; 12];
        expected[5] = 3.0;
        expected[7] = -2.0;
        assert_eq!(out, expected);
    }

    #[test]
    fn conv_boundary_only_first_tap() {
        // At t=0 every earlier tap hits padding: out[0] = w0*x0 + bias.
        let input = [2.0, 1.0, 1.0];
        let out = conv_1ch(&input, &[0.5, 10.0, 100.0], 0.25, 1);
        assert_eq!(out[0], 0.5 * 2.0 + 0.25);
    }

    #[test]
    fn conv_channel_mismatch_is_error() {
        let x = Tensor::zeros(vec![2, 4]);
        let w = Tensor::zeros(vec![1, 3, 2]);
        let b = Tensor::zeros(vec![1]);
        assert!(conv1d_causal_dilated(&x, &w, &b, 1).is_err());
    }

    #[test]
    fn conv_causality_exhaustive() {
        // Perturbing input at time t must not change outputs before t.
        let t_len = 7;
        let w = Tensor::new(vec![2, 1, 3], (0..6).map(|i| 0.3 * i as f64 - 0.5).collect())
            .unwrap();
        let b = Tensor::new(vec![2], vec![0.1, -0.2]).unwrap();
        let base: Vec<f64> = (0..t_len).map(|i| (i as f64 * 0.7).sin()).collect();
        let x0 = Tensor::new(vec![1, t_len], base.clone()).unwrap();
        let y0 = conv1d_causal_dilated(&x0, &w, &b, 2).unwrap();
        for t in 0..t_len {
            let mut perturbed = base.clone();
            perturbed[t] += 1.0;
            let y = conv1d_causal_dilated(
                &Tensor::new(vec![1, t_len], perturbed).unwrap(),
                &w,
                &b,
                2,
            )
            .unwrap();
            for co in 0..2 {
                for s in 0..t {
                    assert_eq!(y.at2(co, s), y0.at2(co, s), "t={t} s={s}");
                }
            }
        }
    }

    #[test]
    fn conv_linearity() {
        let w = Tensor::new(vec![1, 1, 2], vec![1.5, -0.5]).unwrap();
        let b = Tensor::zeros(vec![1]);
        let x: Vec<f64> = (0..6).map(|i| (i as f64).cos()).collect();
        let y: Vec<f64> = (0..6).map(|i| (i as f64 * 1.3).sin()).collect();
        let (a_c, b_c) = (2.5, -0.75);
        let combined: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a_c * u + b_c * v).collect();
        let cx = conv1d_causal_dilated(&Tensor::new(vec![1, 6], x).unwrap(), &w, &b, 2).unwrap();
        let cy = conv1d_causal_dilated(&Tensor::new(vec![1, 6], y).unwrap(), &w, &b, 2).unwrap();
        let cc =
            conv1d_causal_dilated(&Tensor::new(vec![1, 6], combined).unwrap(), &w, &b, 2).unwrap();
        for t in 0..6 {
            let lhs = cc.at2(0, t);
            let rhs = a_c * cx.at2(0, t) + b_c * cy.at2(0, t);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_identity_and_zero() {
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::from_vec(vec![3.0, -4.0]);
        let zero_b = Tensor::zeros(vec![2]);
        assert_eq!(affine(&eye, &x, Some(&zero_b)).unwrap().data(), x.data());

        let zero_w = Tensor::zeros(vec![2, 2]);
        let b = Tensor::from_vec(vec![5.0, 6.0]);
        assert_eq!(affine(&zero_w, &x, Some(&b)).unwrap().data(), b.data());
    }

    #[test]
    fn affine_hand_case() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = Tensor::from_vec(vec![1.0, 1.0]);
        let b = Tensor::zeros(vec![2]);
        assert_eq!(affine(&w, &x, Some(&b)).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn affine_dim_mismatch_is_error() {
        let w = Tensor::zeros(vec![2, 3]);
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        assert!(affine(&w, &x, None).is_err());
    }

    #[test]
    fn backward_square() {
        let mut tape = GradTape::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(w, w).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(w).item().unwrap(), 6.0);
    }

    #[test]
    fn backward_unused_param_gets_zero() {
        let mut tape = GradTape::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let unused = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.mul(w, w).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_seed() {
        let mut tape = GradTape::new();
        let v = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn backward_sum_equals_sum_of_backwards() {
        // Gradient additivity: backward on a sum matches summed per-output
        // backward passes.
        let build = |tape: &mut GradTape| {
            let w = tape.leaf(Tensor::from_vec(vec![0.4, -1.2, 2.0]));
            let sq = tape.mul(w, w).unwrap();
            let s1 = tape.slice(sq, 0, 1).unwrap();
            let s2 = tape.slice(sq, 1, 2).unwrap();
            let z1 = tape.leaf(Tensor::zeros(vec![1]));
            let z2 = tape.leaf(Tensor::zeros(vec![2]));
            let n1 = tape.norm_diff(s1, z1).unwrap();
            let n2 = tape.norm_diff(s2, z2).unwrap();
            (w, n1, n2)
        };

        let mut t_sum = GradTape::new();
        let (w_sum, n1, n2) = build(&mut t_sum);
        let total = t_sum.sum_scalars(vec![n1, n2]).unwrap();
        t_sum.backward(total).unwrap();
        let g_total = t_sum.grad(w_sum);

        let mut t_a = GradTape::new();
        let (w_a, na, _) = build(&mut t_a);
        t_a.backward(na).unwrap();
        let ga = t_a.grad(w_a);

        let mut t_b = GradTape::new();
        let (w_b, _, nb) = build(&mut t_b);
        t_b.backward(nb).unwrap();
        let gb = t_b.grad(w_b);

        for i in 0..3 {
            let s = ga.data()[i] + gb.data()[i];
            assert!((g_total.data()[i] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn gated_activation_values() {
        let mut tape = GradTape::new();
        let zero = tape.leaf(Tensor::from_vec(vec![0.0]));
        let z = tape.gated_activation(zero, zero).unwrap();
        assert_eq!(tape.value(z).data()[0], 0.0);

        let one = tape.leaf(Tensor::from_vec(vec![1.0]));
        let g = tape.gated_activation(one, zero).unwrap();
        let expected = 1.0_f64.tanh() * 0.5;
        assert!((tape.value(g).data()[0] - expected).abs() < 1e-12);
        assert!((expected - 0.380797).abs() < 1e-6);

        let big = tape.leaf(Tensor::from_vec(vec![1e6]));
        let sat = tape.gated_activation(big, big).unwrap();
        assert!((tape.value(sat).data()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gated_activation_stays_inside_unit_interval() {
        use crate::rng::DetRng;
        let mut rng = DetRng::new(5);
        let mut tape = GradTape::new();
        for _ in 0..200 {
            let f = tape.leaf(Tensor::from_vec(vec![rng.uniform(-12.0, 12.0)]));
            let g = tape.leaf(Tensor::from_vec(vec![rng.uniform(-12.0, 12.0)]));
            let z = tape.gated_activation(f, g).unwrap();
            let v = tape.value(z).data()[0];
            assert!(v > -1.0 && v < 1.0, "gated output {v} escaped (-1, 1)");
        }
    }

    #[test]
    fn norm_diff_zero_gradient_convention() {
        let mut tape = GradTape::new();
        let a = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let n = tape.norm_diff(a, b).unwrap();
        tape.backward(n).unwrap();
        assert_eq!(tape.grad(a).data(), &[0.0, 0.0]);
        assert_eq!(tape.grad(b).data(), &[0.0, 0.0]);
    }
}
