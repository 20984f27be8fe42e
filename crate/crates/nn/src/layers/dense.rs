use crate::error::{shape_err, Result};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

/// Affine map over the last dimension: `y = x Wᵀ + b`, W is units × features.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub features: usize,
    pub units: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(features: usize, units: usize, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.len() != units * features || bias.len() != units {
            return Err(shape_err("dense parameter sizes disagree with layer width"));
        }
        Ok(Dense {
            features,
            units,
            weight,
            bias,
            input: None,
        })
    }

    pub fn forward(&mut self, x: Tensor<T>, out_shape: Vec<usize>) -> Result<Tensor<T>> {
        let f = self.features;
        if x.is_empty() || x.len() % f != 0 {
            return Err(shape_err(format!(
                "dense input {:?} does not end in {f} features",
                x.shape()
            )));
        }
        let rows = x.len() / f;
        let mut out = vec![T::zero(); rows * self.units];
        gemm(
            MatRef::row_major(x.data(), rows, f),
            MatRef::row_major(self.weight.data(), self.units, f).t(),
            &mut out,
            false,
        );
        for row in out.chunks_exact_mut(self.units) {
            for (o, b) in row.iter_mut().zip(self.bias.data()) {
                *o += *b;
            }
        }
        self.input = Some(x);
        Tensor::new(out_shape, out)
    }

    pub fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| shape_err("dense backward before forward"))?;
        let (f, u) = (self.features, self.units);
        let rows = x.len() / f;
        if grad.len() != rows * u {
            return Err(shape_err("dense output gradient has the wrong size"));
        }
        let g = MatRef::row_major(grad.data(), rows, u);
        gemm(g.t(), MatRef::row_major(x.data(), rows, f), self.weight.grad_mut(), true);
        let db = self.bias.grad_mut();
        for row in grad.data().chunks_exact(u) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += *v;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = vec![T::zero(); x.len()];
        gemm(g, MatRef::row_major(self.weight.data(), u, f), &mut dx, false);
        Ok(Some(Tensor::new(x.shape().to_vec(), dx)?))
    }
}
