//! Layer specifications and their runtime state.

mod activation;
mod conv;
mod dense;
mod lstm;

pub use activation::{Relu, Softmax};
pub use conv::{Conv, ConvGeom, MaxPool};
pub use dense::Dense;
pub use lstm::{lstm_step, Lstm};

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Serializable description of one layer. Shapes exclude the batch dimension
/// and are channels-last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Over D×H×W×C.
    Conv3d {
        filters: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    },
    /// Over the trailing H×W×C; leading dimensions are treated as batch.
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    },
    MaxPool3d {
        window: [usize; 3],
    },
    MaxPool2d {
        window: [usize; 2],
    },
    /// Over the last dimension.
    Dense {
        units: usize,
    },
    Relu,
    /// Over the last dimension.
    Softmax,
    /// Keeps the first `keep` dimensions and merges the rest.
    Flatten {
        keep: usize,
    },
    /// T×F sequence in, final hidden state out.
    Lstm {
        hidden: usize,
    },
}

fn split_hwc(shape: &[usize], what: &str) -> Result<(Vec<usize>, [usize; 3])> {
    if shape.len() < 3 {
        return Err(shape_err(format!("{what} needs at least H×W×C input, got {shape:?}")));
    }
    let k = shape.len() - 3;
    Ok((shape[..k].to_vec(), [shape[k], shape[k + 1], shape[k + 2]]))
}

fn dhwc(shape: &[usize], what: &str) -> Result<[usize; 4]> {
    match shape {
        &[d, h, w, c] => Ok([d, h, w, c]),
        _ => Err(shape_err(format!("{what} needs D×H×W×C input, got {shape:?}"))),
    }
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3d { .. } => "conv3d",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool3d { .. } => "maxpool3d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Flatten { .. } => "flatten",
            LayerSpec::Lstm { .. } => "lstm",
        }
    }

    fn conv_geom(&self, input: &[usize]) -> Result<Option<(Vec<usize>, ConvGeom)>> {
        Ok(match *self {
            LayerSpec::Conv3d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let [d, h, w, c] = dhwc(input, "conv3d")?;
                Some((
                    Vec::new(),
                    ConvGeom::new([d, h, w], c, filters, kernel, stride, padding)?,
                ))
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (lead, [h, w, c]) = split_hwc(input, "conv2d")?;
                let g = ConvGeom::new(
                    [1, h, w],
                    c,
                    filters,
                    [1, kernel[0], kernel[1]],
                    [1, stride[0], stride[1]],
                    [0, padding[0], padding[1]],
                )?;
                Some((lead, g))
            }
            _ => None,
        })
    }

    fn pool(&self, input: &[usize]) -> Result<Option<(Vec<usize>, MaxPool)>> {
        Ok(match *self {
            LayerSpec::MaxPool3d { window } => {
                let [d, h, w, c] = dhwc(input, "maxpool3d")?;
                Some((Vec::new(), MaxPool::new([d, h, w], c, window)?))
            }
            LayerSpec::MaxPool2d { window } => {
                let (lead, [h, w, c]) = split_hwc(input, "maxpool2d")?;
                Some((lead, MaxPool::new([1, h, w], c, [1, window[0], window[1]])?))
            }
            _ => None,
        })
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.iter().any(|&d| d == 0) {
            return Err(shape_err(format!("empty dimension in {input:?}")));
        }
        if let Some((mut lead, g)) = self.conv_geom(input)? {
            if matches!(self, LayerSpec::Conv3d { .. }) {
                lead.push(g.output[0]);
            }
            lead.extend([g.output[1], g.output[2], g.out_channels]);
            return Ok(lead);
        }
        if let Some((mut lead, p)) = self.pool(input)? {
            if matches!(self, LayerSpec::MaxPool3d { .. }) {
                lead.push(p.output[0]);
            }
            lead.extend([p.output[1], p.output[2], p.channels]);
            return Ok(lead);
        }
        match *self {
            LayerSpec::Dense { units } => {
                if units == 0 || input.is_empty() {
                    return Err(shape_err("dense needs units and a feature dimension"));
                }
                let mut out = input.to_vec();
                *out.last_mut().expect("non-empty") = units;
                Ok(out)
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.is_empty() {
                    return Err(shape_err("softmax needs a class dimension"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten { keep } => {
                if keep >= input.len() {
                    return Err(shape_err(format!(
                        "flatten cannot keep {keep} of {} dimensions",
                        input.len()
                    )));
                }
                let mut out = input[..keep].to_vec();
                out.push(input[keep..].iter().product());
                Ok(out)
            }
            LayerSpec::Lstm { hidden } => match input {
                &[_, _] if hidden > 0 => Ok(vec![hidden]),
                _ => Err(shape_err(format!("lstm needs T×F input, got {input:?}"))),
            },
            _ => unreachable!("convolution and pooling handled above"),
        }
    }

    pub fn param_shapes(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        self.output_shape(input)?;
        Ok(match *self {
            LayerSpec::Conv3d {
                filters, kernel, ..
            } => vec![
                vec![filters, kernel[0], kernel[1], kernel[2], input[3]],
                vec![filters],
            ],
            LayerSpec::Conv2d {
                filters, kernel, ..
            } => vec![
                vec![filters, kernel[0], kernel[1], input[input.len() - 1]],
                vec![filters],
            ],
            LayerSpec::Dense { units } => vec![vec![units, input[input.len() - 1]], vec![units]],
            LayerSpec::Lstm { hidden } => vec![
                vec![4 * hidden, input[1]],
                vec![4 * hidden, hidden],
                vec![4 * hidden],
            ],
            _ => Vec::new(),
        })
    }
}

/// Runtime state of one layer.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv<T>),
    Pool(MaxPool),
    Dense(Dense<T>),
    Relu(Relu),
    Softmax(Softmax<T>),
    Flatten,
    Lstm(Lstm<T>),
}

impl<T: Scalar> Layer<T> {
    /// Builds a layer from a spec and parameters shaped as `param_shapes`.
    pub fn from_params(spec: &LayerSpec, input: &[usize], params: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = spec.param_shapes(input)?;
        if shapes.len() != params.len()
            || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape())
        {
            return Err(shape_err(format!(
                "{} expects parameters {shapes:?}, got {:?}",
                spec.name(),
                params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()
            )));
        }
        let mut params = params.into_iter();
        let mut next = || params.next().expect("count checked");
        if let Some((_, g)) = spec.conv_geom(input)? {
            let w = next();
            let k = g.patch_len();
            let w = w.reshape(vec![g.out_channels, k])?;
            return Ok(Layer::Conv(Conv::new(g, w, next())?));
        }
        if let Some((_, p)) = spec.pool(input)? {
            return Ok(Layer::Pool(p));
        }
        Ok(match *spec {
            LayerSpec::Dense { units } => {
                Layer::Dense(Dense::new(input[input.len() - 1], units, next(), next())?)
            }
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Softmax => Layer::Softmax(Softmax::new(input[input.len() - 1])),
            LayerSpec::Flatten { .. } => Layer::Flatten,
            LayerSpec::Lstm { hidden } => {
                Layer::Lstm(Lstm::new(input[1], hidden, next(), next(), next())?)
            }
            _ => unreachable!("convolution and pooling handled above"),
        })
    }

    /// `out_shape` includes the batch dimension.
    pub fn forward(&mut self, x: Tensor<T>, out_shape: Vec<usize>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x, out_shape),
            Layer::Pool(l) => l.forward(x, out_shape),
            Layer::Dense(l) => l.forward(x, out_shape),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Softmax(l) => l.forward(x),
            Layer::Flatten => x.reshape(out_shape),
            Layer::Lstm(l) => l.forward(x),
        }
    }

    /// `in_shape` includes the batch dimension.
    pub fn backward(
        &mut self,
        grad: Tensor<T>,
        in_shape: Vec<usize>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        Ok(match self {
            Layer::Conv(l) => l.backward(grad, need_input_grad)?,
            Layer::Dense(l) => l.backward(grad, need_input_grad)?,
            Layer::Lstm(l) => l.backward(grad, need_input_grad)?,
            Layer::Pool(l) => Some(l.backward(grad)?),
            Layer::Relu(l) => Some(l.backward(grad)?),
            Layer::Softmax(l) => Some(l.backward(grad)?),
            Layer::Flatten => Some(grad.reshape(in_shape)?),
        })
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Lstm(l) => vec![&l.w_ih, &l.w_hh, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Lstm(l) => vec![&mut l.w_ih, &mut l.w_hh, &mut l.bias],
            _ => Vec::new(),
        }
    }

    /// Feeds the piecewise-linear branch choices of the last forward pass
    /// (relu on/off, pool winners) into `state`.
    pub fn hash_branches<H: Hasher>(&self, state: &mut H) {
        match self {
            Layer::Relu(l) => l.mask().hash(state),
            Layer::Pool(l) => l.argmax().hash(state),
            _ => {}
        }
    }
}
