use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn forward<T: Scalar>(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        self.mask.clear();
        self.mask.reserve(x.len());
        for v in x.data_mut() {
            let on = *v > T::zero();
            self.mask.push(on);
            if !on {
                *v = T::zero();
            }
        }
        x
    }

    pub fn backward<T: Scalar>(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        if grad.len() != self.mask.len() {
            return Err(shape_err("relu gradient has the wrong size"));
        }
        for (g, &on) in grad.data_mut().iter_mut().zip(&self.mask) {
            if !on {
                *g = T::zero();
            }
        }
        Ok(grad)
    }
}

/// Softmax over the last dimension.
#[derive(Clone, Debug)]
pub struct Softmax<T> {
    pub width: usize,
    output: Vec<T>,
}

impl<T: Scalar> Softmax<T> {
    pub fn new(width: usize) -> Self {
        Softmax {
            width,
            output: Vec::new(),
        }
    }

    pub fn forward(&mut self, mut x: Tensor<T>) -> Result<Tensor<T>> {
        if x.is_empty() || x.len() % self.width != 0 {
            return Err(shape_err("softmax input has the wrong size"));
        }
        for row in x.data_mut().chunks_exact_mut(self.width) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.output.clear();
        self.output.extend_from_slice(x.data());
        Ok(x)
    }

    pub fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        if grad.len() != self.output.len() {
            return Err(shape_err("softmax gradient has the wrong size"));
        }
        for (g, y) in grad
            .data_mut()
            .chunks_exact_mut(self.width)
            .zip(self.output.chunks_exact(self.width))
        {
            let dot: T = g.iter().zip(y).map(|(a, b)| *a * *b).sum();
            for (gi, yi) in g.iter_mut().zip(y) {
                *gi = *yi * (*gi - dot);
            }
        }
        Ok(grad)
    }
}
