//! The embedding network: a feed-forward stack of convolution, ReLU, max
//! pooling and dense layers with exact analytic gradients.
//!
//! All branches of a Siamese or Quadruplet computation run through one
//! [`EncoderParams`]; there is no per-branch state.

mod arch;
mod checkpoint;

use rand::Rng;
use rayon::prelude::*;

use crate::videoset::{Frame, FrameShape};
use crate::{seeded_rng, Error, Result};

pub use arch::{EncoderSpec, Layer, Tap, MAX_ACTIVATION, MAX_PARAMS};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};

/// Weights and biases of one parametric layer.
///
/// Convolution weights are laid out `[out][in][ky][kx]`, dense weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamBlock {
    fn zeros(weights: usize, bias: usize) -> Self {
        Self {
            weights: vec![0.0; weights],
            bias: vec![0.0; bias],
        }
    }

    fn same_shape(&self, other: &ParamBlock) -> bool {
        self.weights.len() == other.weights.len() && self.bias.len() == other.bias.len()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// All learnable weights of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    spec: EncoderSpec,
    blocks: Vec<ParamBlock>,
}

/// Fan-in scaled uniform initialization: `U(-a, a)` with `a = sqrt(6 / fan_in)`,
/// which gives weight variance `2 / fan_in`. Biases start at zero.
pub fn init_params(spec: &EncoderSpec, seed: u64) -> EncoderParams {
    let mut rng = seeded_rng(seed);
    let blocks = spec
        .block_sizes()
        .into_iter()
        .map(|(weights, bias)| {
            let fan_in = weights / bias;
            let a = (6.0 / fan_in as f64).sqrt();
            ParamBlock {
                weights: (0..weights).map(|_| rng.random_range(-a..a)).collect(),
                bias: vec![0.0; bias],
            }
        })
        .collect();
    EncoderParams {
        spec: spec.clone(),
        blocks,
    }
}

/// Target weight variance of [`init_params`] for a layer with the given fan-in.
pub fn init_variance(fan_in: usize) -> f64 {
    2.0 / fan_in as f64
}

impl EncoderParams {
    /// Assembles parameters from explicit blocks, checking shapes and finiteness.
    pub fn from_blocks(spec: EncoderSpec, blocks: Vec<ParamBlock>) -> Result<Self> {
        let sizes = spec.block_sizes();
        if sizes.len() != blocks.len()
            || sizes
                .iter()
                .zip(&blocks)
                .any(|(&(w, b), blk)| blk.weights.len() != w || blk.bias.len() != b)
        {
            return Err(Error::InconsistentShape {
                expected: format!("{sizes:?}"),
                found: format!(
                    "{:?}",
                    blocks
                        .iter()
                        .map(|b| (b.weights.len(), b.bias.len()))
                        .collect::<Vec<_>>()
                ),
                context: "parameter blocks".into(),
            });
        }
        if blocks.iter().any(|b| b.values().any(|v| !v.is_finite())) {
            return Err(Error::malformed("parameters", "non-finite value"));
        }
        Ok(Self { spec, blocks })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    /// Mutable access for optimizers and tests. Shapes must not change.
    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.weights.len() + b.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.values().all(|v| v.is_finite()))
    }

    /// Every weight and bias rounded through `f32`, as stored in checkpoints.
    pub fn to_f32_precision(&self) -> Self {
        let mut out = self.clone();
        for block in &mut out.blocks {
            for v in block.values_mut() {
                *v = f64::from(*v as f32);
            }
        }
        out
    }
}

/// Gradients with respect to every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub blocks: Vec<ParamBlock>,
}

impl GradientSet {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            blocks: params
                .blocks
                .iter()
                .map(|b| ParamBlock::zeros(b.weights.len(), b.bias.len()))
                .collect(),
        }
    }

    pub fn is_congruent(&self, params: &EncoderParams) -> bool {
        self.blocks.len() == params.blocks.len()
            && self.blocks.iter().zip(&params.blocks).all(|(g, p)| g.same_shape(p))
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in &mut self.blocks {
            for v in block.values_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.values().all(|&v| v == 0.0))
    }

    /// Index of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| b.values().any(|v| !v.is_finite()))
    }
}

/// An embedding vector `Ψ(frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl std::ops::Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    /// Input activation of every evaluated layer.
    inputs: Vec<Vec<f64>>,
    /// Flat argmax input index per pooled output, for pooling layers.
    pool_argmax: Vec<Vec<usize>>,
    /// Second-largest value gap per pooled output (kink distance).
    pool_margin: Vec<f64>,
    spec_fingerprint: String,
}

impl ActivationTrace {
    /// Number of evaluated layers.
    pub fn depth(&self) -> usize {
        self.inputs.len()
    }

    /// Distance of this forward pass from the nearest non-differentiable
    /// point: the smallest `|x|` entering a ReLU, or the smallest gap between
    /// the top two values of a pooling window.
    pub fn kink_margin(&self, spec: &EncoderSpec) -> f64 {
        let relu = spec
            .layers()
            .iter()
            .zip(&self.inputs)
            .filter(|(l, _)| matches!(l, Layer::Relu))
            .flat_map(|(_, x)| x.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min);
        relu.min(self.pool_margin.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

fn to_f64(frame: &Frame) -> Vec<f64> {
    frame.pixels().iter().map(|&v| f64::from(v)).collect()
}

fn conv_forward(
    x: &[f64],
    s: FrameShape,
    block: &ParamBlock,
    out_channels: usize,
    k: usize,
    pad: usize,
    o: FrameShape,
) -> Vec<f64> {
    let mut y = vec![0.0; o.len()];
    for oc in 0..out_channels {
        let bias = block.bias[oc];
        let out = &mut y[oc * o.height * o.width..(oc + 1) * o.height * o.width];
        out.iter_mut().for_each(|v| *v = bias);
        for ic in 0..s.channels {
            let plane = &x[ic * s.height * s.width..(ic + 1) * s.height * s.width];
            for ky in 0..k {
                for kx in 0..k {
                    let w = block.weights[((oc * s.channels + ic) * k + ky) * k + kx];
                    for oy in 0..o.height {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= s.height {
                            continue;
                        }
                        let row = &plane[(iy - pad) * s.width..(iy - pad + 1) * s.width];
                        let orow = &mut out[oy * o.width..(oy + 1) * o.width];
                        for (ox, ov) in orow.iter_mut().enumerate() {
                            let ix = ox + kx;
                            if ix >= pad && ix - pad < s.width {
                                *ov += w * row[ix - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    s: FrameShape,
    block: &ParamBlock,
    grad_block: &mut ParamBlock,
    k: usize,
    pad: usize,
    o: FrameShape,
    g: &[f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let mut dx = if need_input_grad {
        vec![0.0; s.len()]
    } else {
        Vec::new()
    };
    let plane_out = o.height * o.width;
    for oc in 0..o.channels {
        let gout = &g[oc * plane_out..(oc + 1) * plane_out];
        grad_block.bias[oc] += gout.iter().sum::<f64>();
        for ic in 0..s.channels {
            let plane_off = ic * s.height * s.width;
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((oc * s.channels + ic) * k + ky) * k + kx;
                    let w = block.weights[widx];
                    let mut dw = 0.0;
                    for oy in 0..o.height {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= s.height {
                            continue;
                        }
                        let row_off = plane_off + (iy - pad) * s.width;
                        for ox in 0..o.width {
                            let ix = ox + kx;
                            if ix < pad || ix - pad >= s.width {
                                continue;
                            }
                            let gv = gout[oy * o.width + ox];
                            dw += gv * x[row_off + ix - pad];
                            if need_input_grad {
                                dx[row_off + ix - pad] += w * gv;
                            }
                        }
                    }
                    grad_block.weights[widx] += dw;
                }
            }
        }
    }
    dx
}

fn pool_forward(x: &[f64], s: FrameShape, size: usize, o: FrameShape) -> (Vec<f64>, Vec<usize>, f64) {
    let mut y = vec![0.0; o.len()];
    let mut arg = vec![0usize; o.len()];
    let mut margin = f64::INFINITY;
    for c in 0..s.channels {
        for oy in 0..o.height {
            for ox in 0..o.width {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = (c * s.height + oy * size + dy) * s.width + ox * size + dx;
                        let v = x[idx];
                        // First maximum wins ties.
                        if v > best {
                            second = best;
                            best = v;
                            best_idx = idx;
                        } else if v > second {
                            second = v;
                        }
                    }
                }
                let oidx = (c * o.height + oy) * o.width + ox;
                y[oidx] = best;
                arg[oidx] = best_idx;
                // Exact ties come from saturated ReLUs upstream and move together.
                if best > second {
                    margin = margin.min(best - second);
                }
            }
        }
    }
    (y, arg, margin)
}

fn dense_forward(x: &[f64], block: &ParamBlock, outputs: usize) -> Vec<f64> {
    let n = x.len();
    (0..outputs)
        .map(|o| {
            let row = &block.weights[o * n..(o + 1) * n];
            block.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

fn check_frame(spec: &EncoderSpec, frame: &Frame) -> Result<()> {
    if frame.shape() != spec.input() {
        return Err(Error::InconsistentShape {
            expected: spec.input().to_string(),
            found: frame.shape().to_string(),
            context: "encoder input".into(),
        });
    }
    Ok(())
}

fn run_layers(
    params: &EncoderParams,
    input: Vec<f64>,
    end: usize,
    mut trace: Option<&mut ActivationTrace>,
) -> Vec<f64> {
    let spec = &params.spec;
    let mut x = input;
    let mut block_idx = 0;
    for (i, layer) in spec.layers()[..end].iter().enumerate() {
        let s = spec.shape_at(i);
        let o = spec.shape_at(i + 1);
        let (y, argmax) = match *layer {
            Layer::Conv {
                out_channels,
                kernel,
                padding,
            } => {
                let y = conv_forward(&x, s, &params.blocks[block_idx], out_channels, kernel, padding, o);
                block_idx += 1;
                (y, Vec::new())
            }
            Layer::Dense { outputs } => {
                let y = dense_forward(&x, &params.blocks[block_idx], outputs);
                block_idx += 1;
                (y, Vec::new())
            }
            Layer::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), Vec::new()),
            Layer::MaxPool { size } => {
                let (y, arg, margin) = pool_forward(&x, s, size, o);
                if let Some(t) = trace.as_deref_mut() {
                    t.pool_margin.push(margin);
                }
                (y, arg)
            }
        };
        if let Some(t) = trace.as_deref_mut() {
            t.inputs.push(std::mem::replace(&mut x, y));
            t.pool_argmax.push(argmax);
        } else {
            x = y;
        }
    }
    x
}

/// Embeds one frame and records the activations needed by [`backward`].
pub fn forward(params: &EncoderParams, frame: &Frame, tap: Tap) -> Result<(Embedding, ActivationTrace)> {
    check_frame(&params.spec, frame)?;
    let end = params.spec.tap_end(tap)?;
    let mut trace = ActivationTrace {
        inputs: Vec::with_capacity(end),
        pool_argmax: Vec::with_capacity(end),
        pool_margin: Vec::new(),
        spec_fingerprint: params.spec.to_string(),
    };
    let out = run_layers(params, to_f64(frame), end, Some(&mut trace));
    Ok((Embedding(out), trace))
}

/// Embeds one frame without keeping a trace.
pub fn embed(params: &EncoderParams, frame: &Frame, tap: Tap) -> Result<Embedding> {
    check_frame(&params.spec, frame)?;
    let end = params.spec.tap_end(tap)?;
    Ok(Embedding(run_layers(params, to_f64(frame), end, None)))
}

/// Embeds every frame with one shared parameter set. Output order matches input order.
pub fn batch_forward(params: &EncoderParams, frames: &[&Frame], tap: Tap) -> Result<Vec<Embedding>> {
    frames.par_iter().map(|f| embed(params, f, tap)).collect()
}

/// Gradient of `⟨embedding, grad_at_embedding⟩` with respect to every parameter.
///
/// Blocks of layers beyond the trace's tap receive zero gradient.
pub fn backward(params: &EncoderParams, trace: &ActivationTrace, grad_at_embedding: &[f64]) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    backward_into(params, trace, grad_at_embedding, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into `grads`.
pub fn backward_into(
    params: &EncoderParams,
    trace: &ActivationTrace,
    grad_at_embedding: &[f64],
    grads: &mut GradientSet,
) -> Result<()> {
    let spec = &params.spec;
    let depth = trace.depth();
    if trace.spec_fingerprint != spec.to_string() || depth > spec.layers().len() {
        return Err(Error::InvalidArgument(
            "activation trace was produced by a different architecture".into(),
        ));
    }
    if !grads.is_congruent(params) {
        return Err(Error::InvalidArgument(
            "gradient set is not congruent with the parameters".into(),
        ));
    }
    let out_dim = spec.shape_at(depth).len();
    if grad_at_embedding.len() != out_dim {
        return Err(Error::DimensionMismatch {
            left: grad_at_embedding.len(),
            right: out_dim,
        });
    }

    let mut block_idx = spec.layers()[..depth].iter().filter(|l| l.has_params()).count();
    let mut g = grad_at_embedding.to_vec();
    for i in (0..depth).rev() {
        let x = &trace.inputs[i];
        let s = spec.shape_at(i);
        let o = spec.shape_at(i + 1);
        let need_input_grad = i > 0;
        g = match spec.layers()[i] {
            Layer::Dense { outputs } => {
                block_idx -= 1;
                let block = &params.blocks[block_idx];
                let gb = &mut grads.blocks[block_idx];
                let n = x.len();
                let mut dx = if need_input_grad { vec![0.0; n] } else { Vec::new() };
                for (out, &go) in g.iter().enumerate().take(outputs) {
                    gb.bias[out] += go;
                    if go == 0.0 {
                        continue;
                    }
                    let row = &block.weights[out * n..(out + 1) * n];
                    let grow = &mut gb.weights[out * n..(out + 1) * n];
                    for (gw, &xv) in grow.iter_mut().zip(x) {
                        *gw += go * xv;
                    }
                    if need_input_grad {
                        for (d, &w) in dx.iter_mut().zip(row) {
                            *d += go * w;
                        }
                    }
                }
                dx
            }
            Layer::Conv { kernel, padding, .. } => {
                block_idx -= 1;
                conv_backward(
                    x,
                    s,
                    &params.blocks[block_idx],
                    &mut grads.blocks[block_idx],
                    kernel,
                    padding,
                    o,
                    &g,
                    need_input_grad,
                )
            }
            Layer::Relu => g
                .iter()
                .zip(x)
                .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                .collect(),
            Layer::MaxPool { .. } => {
                let mut dx = vec![0.0; s.len()];
                for (&idx, &gv) in trace.pool_argmax[i].iter().zip(&g) {
                    dx[idx] += gv;
                }
                dx
            }
        };
    }
    Ok(())
}
