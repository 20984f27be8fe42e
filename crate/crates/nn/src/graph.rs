//! Sequential model container.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::layers::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-sample shapes flowing through `specs`: entry 0 is the input, entry
/// `i + 1` the output of layer `i`.
pub fn infer_shapes(input: &[usize], specs: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if specs.is_empty() {
        return Err(shape_err("a model needs at least one layer"));
    }
    let mut shapes = vec![input.to_vec()];
    for spec in specs {
        let next = spec.output_shape(shapes.last().expect("non-empty"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

/// Trainable parameter count without allocating the model.
pub fn count_params(input: &[usize], specs: &[LayerSpec]) -> Result<usize> {
    let shapes = infer_shapes(input, specs)?;
    let mut total = 0;
    for (spec, shape) in specs.iter().zip(&shapes) {
        for p in spec.param_shapes(shape)? {
            total += p.iter().product::<usize>();
        }
    }
    Ok(total)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, limit: f64) -> Vec<f64> {
    let dist = Uniform::new_inclusive(-limit, limit);
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Initial parameters in f64 so that f32 and f64 models from one seed agree.
///
/// Weights feeding a relu use He-uniform, other weights Glorot-uniform, biases
/// start at zero. LSTM weights are uniform in ±1/√H with forget bias 1.
fn init_params(
    spec: &LayerSpec,
    next: Option<&LayerSpec>,
    input: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    let shapes = spec.param_shapes(input)?;
    Ok(match spec {
        LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } => {
            let w = &shapes[0];
            let fan_out = w[0] * w[1..w.len() - 1].iter().product::<usize>();
            let fan_in = w[1..].iter().product::<usize>();
            let limit = if next == Some(&LayerSpec::Relu) {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let n = w.iter().product();
            vec![
                (w.clone(), uniform(rng, n, limit)),
                (shapes[1].clone(), vec![0.0; shapes[1][0]]),
            ]
        }
        LayerSpec::Lstm { hidden } => {
            let limit = 1.0 / (*hidden as f64).sqrt();
            let mut bias = vec![0.0; 4 * hidden];
            bias[*hidden..2 * hidden].fill(1.0);
            vec![
                (shapes[0].clone(), uniform(rng, shapes[0].iter().product(), limit)),
                (shapes[1].clone(), uniform(rng, shapes[1].iter().product(), limit)),
                (shapes[2].clone(), bias),
            ]
        }
        _ => Vec::new(),
    })
}

#[derive(Clone, Debug)]
pub struct ModelGraph<T> {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    /// Per-sample shapes, `specs.len() + 1` entries.
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> ModelGraph<T> {
    /// Builds a freshly initialized model. `input_shape` excludes the batch.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let shapes = infer_shapes(input_shape, specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            for (shape, values) in init_params(spec, specs.get(i + 1), &shapes[i], &mut rng)? {
                params.push(Tensor::new(shape, values.into_iter().map(T::of).collect())?);
            }
        }
        Self::from_params(input_shape, specs, params)
    }

    /// Assembles a model from parameters listed in layer order.
    pub fn from_params(
        input_shape: &[usize],
        specs: &[LayerSpec],
        params: Vec<Tensor<T>>,
    ) -> Result<Self> {
        let shapes = infer_shapes(input_shape, specs)?;
        let mut params = params.into_iter();
        let mut layers = Vec::with_capacity(specs.len());
        for (spec, shape) in specs.iter().zip(&shapes) {
            let count = spec.param_shapes(shape)?.len();
            let mine: Vec<_> = params.by_ref().take(count).collect();
            if mine.len() != count {
                return Err(shape_err("too few parameter tensors for the layer list"));
            }
            layers.push(Layer::from_params(spec, shape, mine)?);
        }
        if params.next().is_some() {
            return Err(shape_err("more parameter tensors than the layers use"));
        }
        Ok(ModelGraph {
            input_shape: input_shape.to_vec(),
            specs: specs.to_vec(),
            shapes,
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("at least one layer")
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Per-sample shapes after every layer (entry 0 is the input).
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    fn batch_shape(&self, batch: usize, i: usize) -> Vec<usize> {
        let mut s = vec![batch];
        s.extend_from_slice(&self.shapes[i]);
        s
    }

    /// `x` is batch × input_shape.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(shape_err(format!(
                "model expects batch×{:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        if batch == 0 {
            return Err(shape_err("empty batch"));
        }
        let mut h = x;
        for i in 0..self.layers.len() {
            let out_shape = self.batch_shape(batch, i + 1);
            h = self.layers[i].forward(h, out_shape)?;
        }
        Ok(h)
    }

    /// Accumulates parameter gradients for the last forward pass.
    pub fn backward(&mut self, grad: Tensor<T>) -> Result<()> {
        let batch = grad.shape().first().copied().unwrap_or(0);
        if grad.shape() != self.batch_shape(batch, self.layers.len()).as_slice() {
            return Err(shape_err(format!(
                "output gradient {:?} does not match model output {:?}",
                grad.shape(),
                self.output_shape()
            )));
        }
        let mut g = grad;
        for i in (0..self.layers.len()).rev() {
            let in_shape = self.batch_shape(batch, i);
            match self.layers[i].backward(g, in_shape, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameters in their declared shapes (convolution kernels as
    /// Cout×k…×Cin rather than the internal Cout×K matrix).
    pub fn shaped_params(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        let mut flat = self.params().into_iter();
        for (spec, shape) in self.specs.iter().zip(&self.shapes) {
            for s in spec.param_shapes(shape).expect("validated at construction") {
                let p = flat.next().expect("validated at construction");
                out.push(Tensor::new(s, p.data().to_vec()).expect("same length"));
            }
        }
        out
    }

    /// Same architecture and parameter values in another precision.
    pub fn cast<U: Scalar>(&self) -> ModelGraph<U> {
        let params = self.shaped_params().iter().map(|p| p.cast()).collect();
        ModelGraph::from_params(&self.input_shape, &self.specs, params)
            .expect("shapes are unchanged by a cast")
    }

    /// Hash of every relu mask and pool winner from the last forward pass.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for l in &self.layers {
            l.hash_branches(&mut h);
        }
        h.finish()
    }

    /// One line per layer: name, output shape, parameter count.
    pub fn summary(&self) -> String {
        let mut s = format!("input {:?}\n", self.input_shape);
        for (i, (spec, l)) in self.specs.iter().zip(&self.layers).enumerate() {
            let n: usize = l.params().iter().map(|p| p.len()).sum();
            s.push_str(&format!(
                "{:>2} {:<10} {:?} params={}\n",
                i,
                spec.name(),
                self.shapes[i + 1],
                n
            ));
        }
        s.push_str(&format!("total params={}\n", self.param_count()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv3d {
                filters: 2,
                kernel: [3, 3, 3],
                stride: [1, 1, 1],
                padding: [1, 1, 1],
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool3d { window: [2, 2, 2] },
            LayerSpec::Flatten { keep: 0 },
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ]
    }

    #[test]
    fn counts_match_allocation() {
        let m = ModelGraph::<f32>::new(&[2, 4, 4, 1], &small(), 1).unwrap();
        assert_eq!(m.param_count(), count_params(&[2, 4, 4, 1], &small()).unwrap());
        assert_eq!(m.param_count(), 2 * 27 + 2 + 3 * 8 + 3);
        assert_eq!(m.output_shape(), &[3]);
    }

    #[test]
    fn seeded_init_is_reproducible_across_precisions() {
        let a = ModelGraph::<f32>::new(&[2, 4, 4, 1], &small(), 5).unwrap();
        let b = ModelGraph::<f32>::new(&[2, 4, 4, 1], &small(), 5).unwrap();
        let c = ModelGraph::<f64>::new(&[2, 4, 4, 1], &small(), 5).unwrap();
        let d = ModelGraph::<f32>::new(&[2, 4, 4, 1], &small(), 6).unwrap();
        for ((pa, pb), pc) in a.params().iter().zip(b.params()).zip(c.params()) {
            assert_eq!(pa.data(), pb.data());
            for (x, y) in pa.data().iter().zip(pc.data()) {
                assert_eq!(*x, *y as f32);
            }
        }
        assert_ne!(a.params()[0].data(), d.params()[0].data());
    }

    #[test]
    fn forward_checks_input_shape() {
        let mut m = ModelGraph::<f64>::new(&[2, 4, 4, 1], &small(), 1).unwrap();
        assert!(m.forward(Tensor::zeros(vec![3, 2, 4, 4, 2])).is_err());
        let y = m.forward(Tensor::zeros(vec![3, 2, 4, 4, 1])).unwrap();
        assert_eq!(y.shape(), &[3, 3]);
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cast_round_trip_preserves_outputs() {
        let m = ModelGraph::<f64>::new(&[2, 4, 4, 1], &small(), 2).unwrap();
        let mut back: ModelGraph<f64> = m.cast::<f64>();
        let mut orig = m.clone();
        let x = Tensor::new(vec![1, 2, 4, 4, 1], (0..32).map(|i| (i as f64).sin()).collect())
            .unwrap();
        assert_eq!(orig.forward(x.clone()).unwrap(), back.forward(x).unwrap());
    }
}
