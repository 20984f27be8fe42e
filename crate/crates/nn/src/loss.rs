use serde::{Deserialize, Serialize};

use crate::error::{shape_err, NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to at least this before taking the log.
pub const CE_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Expects softmax outputs and one-hot targets.
    CrossEntropy,
    SumSquared,
}

impl Loss {
    /// Loss value and gradient with respect to `pred`.
    pub fn evaluate<T: Scalar>(self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
        match self {
            Loss::CrossEntropy => cross_entropy(pred, target),
            Loss::SumSquared => sum_squared(pred, target),
        }
    }
}

fn rows<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(usize, usize)> {
    if pred.shape() != target.shape() || pred.shape().len() != 2 || pred.is_empty() {
        return Err(shape_err(format!(
            "loss needs matching B×K prediction and target, got {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok((pred.shape()[0], pred.shape()[1]))
}

/// Mean over the batch of `-Σ t·log(max(p, ε))`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let (b, k) = rows(probs, target)?;
    let tol = 1e-6 + 8.0 * T::epsilon().f64();
    for row in probs.data().chunks_exact(k) {
        let s: f64 = row.iter().map(|p| p.f64()).sum();
        if (s - 1.0).abs() > tol {
            return Err(NnError::Shape(format!(
                "cross-entropy input row sums to {s}, expected probabilities"
            )));
        }
    }
    let eps = T::of(CE_EPSILON);
    let inv_b = T::one() / T::of(b as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); b * k];
    for ((p, t), g) in probs.data().iter().zip(target.data()).zip(&mut grad) {
        if *t != T::zero() {
            let clamped = p.max(eps);
            loss -= *t * clamped.ln();
            if *p >= eps {
                *g = -*t / clamped * inv_b;
            }
        }
    }
    Ok((loss * inv_b, Tensor::new(probs.shape().to_vec(), grad)?))
}

/// Mean over the batch of `Σ (p − t)²`.
pub fn sum_squared<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let (b, _) = rows(pred, target)?;
    let inv_b = T::one() / T::of(b as f64);
    let two = T::of(2.0);
    let mut loss = T::zero();
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = *p - *t;
            loss += d * d;
            two * d * inv_b
        })
        .collect();
    Ok((loss * inv_b, Tensor::new(pred.shape().to_vec(), grad)?))
}
