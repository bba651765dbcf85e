//! Network pieces. Each holds parameter ids only, so one structure serves
//! any float type.

use crate::autodiff::{Real, Var};
use crate::nn::{Activation, ConvBlock, Conv2d, Linear, LstmCell, ParamBuilder};

use super::latent::{GaussianVar, StateVar, LOG_VAR_CLAMP};

/// Conv blocks with 2x average pooling after each, then flatten, affine, tanh.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub blocks: Vec<Vec<ConvBlock>>,
    pub fc: Linear,
    pub bottleneck: usize,
}

impl ConvEncoder {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        in_channels: usize,
        widths: &[usize],
        convs_per_block: usize,
        frame_size: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        let mut cin = in_channels;
        let mut blocks = Vec::with_capacity(widths.len());
        for (b, &w) in widths.iter().enumerate() {
            let mut pb = pb.sub(&format!("block{b}"));
            let convs = (0..convs_per_block)
                .map(|k| {
                    let conv = ConvBlock::new(&mut pb.sub(&format!("conv{k}")), cin, w, activation);
                    cin = w;
                    conv
                })
                .collect();
            blocks.push(convs);
        }
        let bottleneck = frame_size >> widths.len();
        let fc = Linear::new(&mut pb.sub("fc"), cin * bottleneck * bottleneck, out_dim);
        ConvEncoder {
            blocks,
            fc,
            bottleneck,
        }
    }

    /// Returns the feature vector and the pre-pool map of every block.
    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>) -> (Var<'g, T>, Vec<Var<'g, T>>) {
        let mut x = x;
        let mut skips = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            for conv in block {
                x = conv.forward(x);
            }
            skips.push(x);
            x = x.avg_pool2();
        }
        let n = x.shape()[0];
        let flat = x.reshape(&[n, self.fc.in_dim]);
        (self.fc.forward(flat).tanh(), skips)
    }
}

/// Upsampling mirror of the content encoder with skip concatenation.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub fc: Linear,
    pub blocks: Vec<Vec<ConvBlock>>,
    pub head: Conv2d,
    pub activation: Activation,
    pub bottleneck: usize,
    pub top_channels: usize,
}

impl Decoder {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        in_dim: usize,
        widths: &[usize],
        convs_per_block: usize,
        frame_size: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Self {
        let bottleneck = frame_size >> widths.len();
        let top = *widths.last().expect("non-empty widths");
        let fc = Linear::new(&mut pb.sub("fc"), in_dim, top * bottleneck * bottleneck);
        // blocks are stored coarse to fine
        let mut blocks = Vec::with_capacity(widths.len());
        let mut cur = top;
        for b in (0..widths.len()).rev() {
            let out = if b > 0 { widths[b - 1] } else { widths[0] };
            let mut pb = pb.sub(&format!("block{b}"));
            let mut cin = cur + widths[b];
            let convs = (0..convs_per_block)
                .map(|k| {
                    let conv = ConvBlock::new(&mut pb.sub(&format!("conv{k}")), cin, out, activation);
                    cin = out;
                    conv
                })
                .collect();
            blocks.push(convs);
            cur = out;
        }
        let head = Conv2d::new(&mut pb.sub("head"), cur, out_channels, 1);
        Decoder {
            fc,
            blocks,
            head,
            activation,
            bottleneck,
            top_channels: top,
        }
    }

    /// `skips` ordered fine to coarse, as produced by [`ConvEncoder::forward`].
    pub fn forward<'g, T: Real>(&self, g: Var<'g, T>, skips: &[Var<'g, T>]) -> Var<'g, T> {
        let graph = g.graph();
        let n = g.shape()[0];
        let s = self.bottleneck;
        let mut x = self
            .activation
            .apply(self.fc.forward(g))
            .reshape(&[n, self.top_channels, s, s]);
        for (block, skip) in self.blocks.iter().zip(skips.iter().rev()) {
            x = graph.concat(&[x.upsample2(), *skip]);
            for conv in block {
                x = conv.forward(x);
            }
        }
        self.head.forward(x).sigmoid()
    }
}

/// Embedding, stacked LSTM cells.
#[derive(Debug, Clone)]
pub struct RecurrentCore {
    pub embed: Linear,
    pub cells: Vec<LstmCell>,
}

impl RecurrentCore {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, in_dim: usize, width: usize, layers: usize) -> Self {
        let embed = Linear::new(&mut pb.sub("embed"), in_dim, width);
        let cells = (0..layers)
            .map(|l| LstmCell::new(&mut pb.sub(&format!("lstm{l}")), width, width))
            .collect();
        RecurrentCore { embed, cells }
    }

    pub fn in_dim(&self) -> usize {
        self.embed.in_dim
    }

    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>, state: &StateVar<'g, T>) -> StateVar<'g, T> {
        let mut input = self.embed.forward(x);
        let mut next = StateVar {
            hidden: Vec::with_capacity(self.cells.len()),
            cell: Vec::with_capacity(self.cells.len()),
        };
        for (l, cell) in self.cells.iter().enumerate() {
            let (h, c) = cell.forward(input, state.hidden[l], state.cell[l]);
            next.hidden.push(h);
            next.cell.push(c);
            input = h;
        }
        next
    }
}

/// Recurrent core with separate mean and log-variance heads.
#[derive(Debug, Clone)]
pub struct GaussianLstm {
    pub core: RecurrentCore,
    pub mean: Linear,
    pub log_var: Linear,
}

impl GaussianLstm {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, in_dim: usize, width: usize, latent: usize) -> Self {
        GaussianLstm {
            core: RecurrentCore::new(&mut pb.sub("core"), in_dim, width, 1),
            mean: Linear::new(&mut pb.sub("mean"), width, latent),
            log_var: Linear::new(&mut pb.sub("log_var"), width, latent),
        }
    }

    pub fn forward<'g, T: Real>(
        &self,
        x: Var<'g, T>,
        state: &StateVar<'g, T>,
    ) -> (GaussianVar<'g, T>, StateVar<'g, T>) {
        let next = self.core.forward(x, state);
        let out = next.top();
        let gauss = GaussianVar {
            mean: self.mean.forward(out),
            log_var: self.log_var.forward(out).clamp(LOG_VAR_CLAMP.0, LOG_VAR_CLAMP.1),
        };
        (gauss, next)
    }
}

/// `g_t = tanh(W LSTM(embed([h_{t-1}, z_t])))`.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub core: RecurrentCore,
    pub out: Linear,
}

impl Predictor {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        in_dim: usize,
        width: usize,
        layers: usize,
        out_dim: usize,
    ) -> Self {
        Predictor {
            core: RecurrentCore::new(&mut pb.sub("core"), in_dim, width, layers),
            out: Linear::new(&mut pb.sub("out"), width, out_dim),
        }
    }

    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>, state: &StateVar<'g, T>) -> (Var<'g, T>, StateVar<'g, T>) {
        let next = self.core.forward(x, state);
        (self.out.forward(next.top()).tanh(), next)
    }
}
