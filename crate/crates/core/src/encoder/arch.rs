//! Architecture descriptions.
//!
//! The text form is a whitespace-separated token list: the input shape
//! followed by layers, e.g.
//!
//! ```text
//! 1x16x16 conv8k3p1 relu pool2 conv16k3p1 relu pool2 dense256 relu dense64
//! ```
//!
//! `convOkKpP` is a stride-1 convolution with `O` output channels, a `K×K`
//! kernel and `P` pixels of zero padding; `poolS` is non-overlapping `S×S`
//! max pooling; `denseN` is a fully connected layer with `N` outputs.

use std::fmt;
use std::str::FromStr;

use crate::videoset::FrameShape;
use crate::{Error, Result};

/// Upper bound on the parameter count of a parsed architecture.
pub const MAX_PARAMS: usize = 1 << 26;
/// Upper bound on any single activation tensor.
pub const MAX_ACTIVATION: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv {
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Dense {
        outputs: usize,
    },
}

impl Layer {
    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::Dense { .. })
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Layer::Conv {
                out_channels,
                kernel,
                padding,
            } => write!(f, "conv{out_channels}k{kernel}p{padding}"),
            Layer::Relu => f.write_str("relu"),
            Layer::MaxPool { size } => write!(f, "pool{size}"),
            Layer::Dense { outputs } => write!(f, "dense{outputs}"),
        }
    }
}

fn number(token: &str, digits: &str) -> Result<usize> {
    let v: usize = digits
        .parse()
        .map_err(|_| Error::malformed("architecture", format!("bad number in {token:?}")))?;
    if v == 0 {
        return Err(Error::malformed(
            "architecture",
            format!("zero size in {token:?}"),
        ));
    }
    Ok(v)
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(token: &str) -> Result<Self> {
        if token == "relu" {
            return Ok(Layer::Relu);
        }
        if let Some(rest) = token.strip_prefix("pool") {
            return Ok(Layer::MaxPool {
                size: number(token, rest)?,
            });
        }
        if let Some(rest) = token.strip_prefix("dense") {
            return Ok(Layer::Dense {
                outputs: number(token, rest)?,
            });
        }
        if let Some(rest) = token.strip_prefix("conv") {
            let (out, rest) = rest
                .split_once('k')
                .ok_or_else(|| Error::malformed("architecture", format!("{token:?}: missing k")))?;
            let (kernel, padding) = rest
                .split_once('p')
                .ok_or_else(|| Error::malformed("architecture", format!("{token:?}: missing p")))?;
            let padding = padding
                .parse()
                .map_err(|_| Error::malformed("architecture", format!("bad padding in {token:?}")))?;
            return Ok(Layer::Conv {
                out_channels: number(token, out)?,
                kernel: number(token, kernel)?,
                padding,
            });
        }
        Err(Error::malformed(
            "architecture",
            format!("unknown layer {token:?}"),
        ))
    }
}

/// Which layer's activations serve as the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    /// Output of the second-to-last dense layer, after its nonlinearity.
    #[default]
    Penultimate,
    /// Output of the last layer.
    Final,
}

impl FromStr for Tap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penultimate" | "fc6" => Ok(Tap::Penultimate),
            "final" | "fc7" => Ok(Tap::Final),
            other => Err(Error::InvalidArgument(format!(
                "unknown tap {other:?} (expected penultimate or final)"
            ))),
        }
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tap::Penultimate => "penultimate",
            Tap::Final => "final",
        })
    }
}

/// A validated, chain-consistent architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    input: FrameShape,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<FrameShape>,
}

impl EncoderSpec {
    pub fn new(input: FrameShape, layers: Vec<Layer>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::malformed("architecture", "empty input shape"));
        }
        if !matches!(layers.last(), Some(Layer::Dense { .. })) {
            return Err(Error::malformed(
                "architecture",
                "the last layer must be dense",
            ));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input);
        let mut params = 0usize;
        for (i, layer) in layers.iter().enumerate() {
            let s = *shapes.last().unwrap();
            let next = match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    let (h, w) = (s.height + 2 * padding, s.width + 2 * padding);
                    if kernel > h || kernel > w {
                        return Err(Error::malformed(
                            "architecture",
                            format!("layer {i} ({layer}): kernel larger than padded input {s}"),
                        ));
                    }
                    params = params.saturating_add(
                        out_channels
                            .saturating_mul(s.channels)
                            .saturating_mul(kernel * kernel)
                            .saturating_add(out_channels),
                    );
                    FrameShape::new(out_channels, h - kernel + 1, w - kernel + 1)
                }
                Layer::Relu => s,
                Layer::MaxPool { size } => {
                    if size > s.height || size > s.width {
                        return Err(Error::malformed(
                            "architecture",
                            format!("layer {i} ({layer}): pool larger than input {s}"),
                        ));
                    }
                    FrameShape::new(s.channels, s.height / size, s.width / size)
                }
                Layer::Dense { outputs } => {
                    params = params.saturating_add(
                        outputs.saturating_mul(s.len()).saturating_add(outputs),
                    );
                    FrameShape::new(outputs, 1, 1)
                }
            };
            if next.channels.saturating_mul(next.height).saturating_mul(next.width) > MAX_ACTIVATION {
                return Err(Error::malformed(
                    "architecture",
                    format!("layer {i} ({layer}): activation too large"),
                ));
            }
            shapes.push(next);
        }
        if params > MAX_PARAMS {
            return Err(Error::malformed(
                "architecture",
                format!("{params} parameters exceeds the limit of {MAX_PARAMS}"),
            ));
        }
        Ok(Self {
            input,
            layers,
            shapes,
        })
    }

    /// The default desk-scale network for a frame shape: two conv/pool
    /// stages, a 256-unit hidden dense layer and an `embedding_dim` output.
    pub fn desk_default(input: FrameShape, embedding_dim: usize) -> Result<Self> {
        Self::new(
            input,
            vec![
                Layer::Conv {
                    out_channels: 8,
                    kernel: 3,
                    padding: 1,
                },
                Layer::Relu,
                Layer::MaxPool { size: 2 },
                Layer::Conv {
                    out_channels: 16,
                    kernel: 3,
                    padding: 1,
                },
                Layer::Relu,
                Layer::MaxPool { size: 2 },
                Layer::Dense { outputs: 256 },
                Layer::Relu,
                Layer::Dense {
                    outputs: embedding_dim,
                },
            ],
        )
    }

    pub fn input(&self) -> FrameShape {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape of layer `i` (or the network output for `i == layers().len()`).
    pub fn shape_at(&self, i: usize) -> FrameShape {
        self.shapes[i]
    }

    /// Output dimension of the final layer.
    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap().len()
    }

    /// Number of leading layers evaluated to produce the embedding at `tap`.
    pub fn tap_end(&self, tap: Tap) -> Result<usize> {
        match tap {
            Tap::Final => Ok(self.layers.len()),
            Tap::Penultimate => {
                let dense: Vec<usize> = self
                    .layers
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| matches!(l, Layer::Dense { .. }))
                    .map(|(i, _)| i)
                    .collect();
                let &idx = dense.iter().rev().nth(1).ok_or_else(|| {
                    Error::InvalidArgument(
                        "penultimate tap needs at least two dense layers".into(),
                    )
                })?;
                let mut end = idx + 1;
                while matches!(self.layers.get(end), Some(Layer::Relu)) {
                    end += 1;
                }
                Ok(end)
            }
        }
    }

    /// Embedding dimension at `tap`.
    pub fn tap_dim(&self, tap: Tap) -> Result<usize> {
        Ok(self.shapes[self.tap_end(tap)?].len())
    }

    /// Parameter count of each parametric layer, in layer order: `(weights, biases)`.
    pub fn block_sizes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, layer)| {
                let s = self.shapes[i];
                match *layer {
                    Layer::Conv {
                        out_channels,
                        kernel,
                        ..
                    } => Some((out_channels * s.channels * kernel * kernel, out_channels)),
                    Layer::Dense { outputs } => Some((outputs * s.len(), outputs)),
                    _ => None,
                }
            })
            .collect()
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.input)?;
        for layer in &self.layers {
            write!(f, " {layer}")?;
        }
        Ok(())
    }
}

impl FromStr for EncoderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let input: FrameShape = tokens
            .next()
            .ok_or_else(|| Error::malformed("architecture", "empty description"))?
            .parse()?;
        let layers = tokens.map(str::parse).collect::<Result<Vec<Layer>>>()?;
        EncoderSpec::new(input, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain() {
        let spec = EncoderSpec::desk_default(FrameShape::new(1, 16, 16), 64).unwrap();
        assert_eq!(
            spec.to_string(),
            "1x16x16 conv8k3p1 relu pool2 conv16k3p1 relu pool2 dense256 relu dense64"
        );
        assert_eq!(spec.shape_at(6), FrameShape::new(16, 4, 4));
        assert_eq!(spec.output_dim(), 64);
        assert_eq!(spec.tap_end(Tap::Penultimate).unwrap(), 8);
        assert_eq!(spec.tap_dim(Tap::Penultimate).unwrap(), 256);
        assert_eq!(spec.tap_dim(Tap::Final).unwrap(), 64);
        assert_eq!(spec.to_string().parse::<EncoderSpec>().unwrap(), spec);
    }

    #[test]
    fn rejects_inconsistent_chains() {
        for bad in [
            "1x4x4 conv2k5p0 dense3",
            "1x4x4 pool8 dense3",
            "1x4x4 relu",
            "1x4x4",
            "1x4x4 dense0",
            "1x4x4 conv2k3 dense2",
            "1x4x4 mystery dense2",
            "4x4 dense2",
            "1x4x4 dense99999999999",
        ] {
            assert!(bad.parse::<EncoderSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn penultimate_needs_two_dense() {
        let spec: EncoderSpec = "1x2x2 dense3".parse().unwrap();
        assert!(spec.tap_end(Tap::Penultimate).is_err());
        let spec: EncoderSpec = "1x2x2 dense3 dense2".parse().unwrap();
        assert_eq!(spec.tap_end(Tap::Penultimate).unwrap(), 1);
    }
}
