//! Canonical parameter layout.
//!
//! Built once from a [`ModelConfig`], this is the single source of truth
//! for parameter order, names, shapes, and initialization. Checkpoint
//! manifests, optimizer state, and tape binding all index into the same
//! flat order, so they can never drift apart.

use super::ModelConfig;

/// Index of a tensor in the flat parameter list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PIdx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform in (-s, s), s = 1 / sqrt(fan_in).
    UniformFanIn(usize),
    Zero,
    /// Zeros with the forget-gate block set to 1.
    LstmBias(usize),
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvIdx {
    pub weight: PIdx,
    pub bias: PIdx,
}

#[derive(Debug, Clone, Copy)]
pub struct AffineIdx {
    pub weight: PIdx,
    pub bias: PIdx,
}

/// One residual block: filter/gate dilated convolutions plus 1x1
/// residual and skip projections.
#[derive(Debug, Clone, Copy)]
pub struct BlockIdx {
    pub filter: ConvIdx,
    pub gate: ConvIdx,
    pub residual: ConvIdx,
    pub skip: ConvIdx,
    pub dilation: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmIdx {
    pub w_ih: PIdx,
    pub w_hh: PIdx,
    pub bias: PIdx,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub input_proj: ConvIdx,
    pub blocks: Vec<BlockIdx>,
    pub post1: ConvIdx,
    pub post2: ConvIdx,
    pub lstm: [LstmIdx; 2],
    pub ref_embed: [AffineIdx; 2],
    pub head: AffineIdx,
    specs: Vec<ParamSpec>,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: InitKind) -> PIdx {
        self.specs.push(ParamSpec { name, shape, init });
        PIdx(self.specs.len() - 1)
    }

    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) -> ConvIdx {
        ConvIdx {
            weight: self.push(
                format!("{name}.weight"),
                vec![c_out, c_in, k],
                InitKind::UniformFanIn(c_in * k),
            ),
            bias: self.push(format!("{name}.bias"), vec![c_out], InitKind::Zero),
        }
    }

    fn affine(&mut self, name: &str, d_out: usize, d_in: usize) -> AffineIdx {
        AffineIdx {
            weight: self.push(
                format!("{name}.weight"),
                vec![d_out, d_in],
                InitKind::UniformFanIn(d_in),
            ),
            bias: self.push(format!("{name}.bias"), vec![d_out], InitKind::Zero),
        }
    }

    fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> LstmIdx {
        LstmIdx {
            w_ih: self.push(
                format!("{name}.w_ih"),
                vec![4 * hidden, input],
                InitKind::UniformFanIn(input),
            ),
            w_hh: self.push(
                format!("{name}.w_hh"),
                vec![4 * hidden, hidden],
                InitKind::UniformFanIn(hidden),
            ),
            bias: self.push(
                format!("{name}.bias"),
                vec![4 * hidden],
                InitKind::LstmBias(hidden),
            ),
        }
    }
}

impl ParamLayout {
    pub fn build(cfg: &ModelConfig) -> ParamLayout {
        let (r, s, k, h) = (
            cfg.residual_channels,
            cfg.skip_channels,
            cfg.kernel_size,
            cfg.lstm_hidden,
        );
        let w = cfg.coeff_dims.width();
        let mut b = Builder { specs: Vec::new() };

        let input_proj = b.conv("input_proj", r, cfg.in_dim, 1);
        let blocks: Vec<BlockIdx> = cfg
            .dilation_schedule
            .iter()
            .enumerate()
            .map(|(i, &dilation)| BlockIdx {
                filter: b.conv(&format!("block{i}.filter"), r, r, k),
                gate: b.conv(&format!("block{i}.gate"), r, r, k),
                residual: b.conv(&format!("block{i}.residual"), r, r, 1),
                skip: b.conv(&format!("block{i}.skip"), s, r, 1),
                dilation,
            })
            .collect();
        let post1 = b.conv("post1", s, s, 1);
        let post2 = b.conv("post2", s, s, 1);
        let lstm0_in = if cfg.autoregressive { s + w } else { s };
        let lstm = [b.lstm("lstm0", lstm0_in, h), b.lstm("lstm1", h, h)];
        let ref_embed = [b.affine("ref_embed0", h, w), b.affine("ref_embed1", h, w)];
        let head = b.affine("head", w, h);

        ParamLayout {
            input_proj,
            blocks,
            post1,
            post2,
            lstm,
            ref_embed,
            head,
            specs: b.specs,
        }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }
}
