//! Single-layer LSTM returning the last hidden state.
//!
//! Gate blocks are stacked in the order input, forget, cell, output:
//! `z = x W_ihᵀ + h W_hhᵀ + b`, with W_ih 4H×F, W_hh 4H×H, b 4H.

use crate::error::{shape_err, Result};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Turns pre-activations `z` (4H) into activated gates in place and writes the
/// new cell and hidden state.
fn cell_update<T: Scalar>(z: &mut [T], c_prev: &[T], c: &mut [T], h: &mut [T]) {
    let hid = c.len();
    for j in 0..hid {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hid + j]);
        let g = z[2 * hid + j].tanh();
        let o = sigmoid(z[3 * hid + j]);
        z[j] = i;
        z[hid + j] = f;
        z[2 * hid + j] = g;
        z[3 * hid + j] = o;
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
}

/// One recurrence step for a single sample; returns `(h, c)`.
pub fn lstm_step<T: Scalar>(
    x: &[T],
    h: &[T],
    c: &[T],
    w_ih: &[T],
    w_hh: &[T],
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let (f, hid) = (x.len(), h.len());
    assert_eq!(w_ih.len(), 4 * hid * f);
    assert_eq!(w_hh.len(), 4 * hid * hid);
    assert_eq!(bias.len(), 4 * hid);
    assert_eq!(c.len(), hid);
    let mut z: Vec<T> = (0..4 * hid)
        .map(|r| {
            let a: T = w_ih[r * f..(r + 1) * f].iter().zip(x).map(|(w, v)| *w * *v).sum();
            let b: T = w_hh[r * hid..(r + 1) * hid].iter().zip(h).map(|(w, v)| *w * *v).sum();
            a + b + bias[r]
        })
        .collect();
    let mut c_new = vec![T::zero(); hid];
    let mut h_new = vec![T::zero(); hid];
    cell_update(&mut z, c, &mut c_new, &mut h_new);
    (h_new, c_new)
}

#[derive(Clone, Debug)]
struct Cache<T> {
    x: Tensor<T>,
    batch: usize,
    steps: usize,
    /// Activated gates per step, B×4H each.
    gates: Vec<Vec<T>>,
    /// Cell states c_{-1}..c_{T-1}, B×H each.
    cells: Vec<Vec<T>>,
    /// Hidden states h_{-1}..h_{T-1}, B×H each.
    hiddens: Vec<Vec<T>>,
}

#[derive(Clone, Debug)]
pub struct Lstm<T> {
    pub features: usize,
    pub hidden: usize,
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> Lstm<T> {
    pub fn new(
        features: usize,
        hidden: usize,
        w_ih: Tensor<T>,
        w_hh: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self> {
        if w_ih.len() != 4 * hidden * features
            || w_hh.len() != 4 * hidden * hidden
            || bias.len() != 4 * hidden
        {
            return Err(shape_err("lstm parameter sizes disagree with layer width"));
        }
        Ok(Lstm {
            features,
            hidden,
            w_ih,
            w_hh,
            bias,
            cache: None,
        })
    }

    /// `x` is B×T×F; the result is B×H.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (f, hid) = (self.features, self.hidden);
        let shape = x.shape();
        if shape.len() != 3 || shape[2] != f || shape[1] == 0 {
            return Err(shape_err(format!(
                "lstm expects B×T×{f} input, got {shape:?}"
            )));
        }
        let (batch, steps) = (shape[0], shape[1]);
        let mut gates = Vec::with_capacity(steps);
        let mut cells = vec![vec![T::zero(); batch * hid]];
        let mut hiddens = vec![vec![T::zero(); batch * hid]];
        let w_ih = MatRef::row_major(self.w_ih.data(), 4 * hid, f).t();
        let w_hh = MatRef::row_major(self.w_hh.data(), 4 * hid, hid).t();
        for t in 0..steps {
            let mut z = vec![T::zero(); batch * 4 * hid];
            gemm(MatRef::strided(&x.data()[t * f..], batch, f, steps * f), w_ih, &mut z, false);
            gemm(MatRef::row_major(&hiddens[t], batch, hid), w_hh, &mut z, true);
            let mut c = vec![T::zero(); batch * hid];
            let mut h = vec![T::zero(); batch * hid];
            for b in 0..batch {
                let zb = &mut z[b * 4 * hid..(b + 1) * 4 * hid];
                for (v, bias) in zb.iter_mut().zip(self.bias.data()) {
                    *v += *bias;
                }
                let span = b * hid..(b + 1) * hid;
                cell_update(zb, &cells[t][span.clone()], &mut c[span.clone()], &mut h[span]);
            }
            gates.push(z);
            cells.push(c);
            hiddens.push(h);
        }
        let out = Tensor::new(vec![batch, hid], hiddens[steps].clone())?;
        self.cache = Some(Cache {
            x,
            batch,
            steps,
            gates,
            cells,
            hiddens,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| shape_err("lstm backward before forward"))?;
        let (f, hid) = (self.features, self.hidden);
        let Cache {
            x,
            batch,
            steps,
            gates,
            cells,
            hiddens,
        } = cache;
        if grad.len() != batch * hid {
            return Err(shape_err("lstm output gradient has the wrong size"));
        }
        let mut dh = grad.into_data();
        let mut dc = vec![T::zero(); batch * hid];
        let mut dx = vec![T::zero(); if need_input_grad { x.len() } else { 0 }];
        let mut dz = vec![T::zero(); batch * 4 * hid];
        let mut dxt = vec![T::zero(); batch * f];
        let mut dh_prev = vec![T::zero(); batch * hid];
        let one = T::one();
        for t in (0..steps).rev() {
            let g = &gates[t];
            for b in 0..batch {
                for j in 0..hid {
                    let k = b * hid + j;
                    let base = b * 4 * hid;
                    let (i, fg, gg, o) = (
                        g[base + j],
                        g[base + hid + j],
                        g[base + 2 * hid + j],
                        g[base + 3 * hid + j],
                    );
                    let tc = cells[t + 1][k].tanh();
                    let d_o = dh[k] * tc;
                    let dct = dc[k] + dh[k] * o * (one - tc * tc);
                    dz[base + j] = dct * gg * i * (one - i);
                    dz[base + hid + j] = dct * cells[t][k] * fg * (one - fg);
                    dz[base + 2 * hid + j] = dct * i * (one - gg * gg);
                    dz[base + 3 * hid + j] = d_o * o * (one - o);
                    dc[k] = dct * fg;
                }
            }
            let dzm = MatRef::row_major(&dz, batch, 4 * hid);
            gemm(
                dzm.t(),
                MatRef::strided(&x.data()[t * f..], batch, f, steps * f),
                self.w_ih.grad_mut(),
                true,
            );
            gemm(
                dzm.t(),
                MatRef::row_major(&hiddens[t], batch, hid),
                self.w_hh.grad_mut(),
                true,
            );
            let db = self.bias.grad_mut();
            for row in dz.chunks_exact(4 * hid) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += *v;
                }
            }
            if need_input_grad {
                gemm(dzm, MatRef::row_major(self.w_ih.data(), 4 * hid, f), &mut dxt, false);
                for b in 0..batch {
                    let dst = (b * steps + t) * f;
                    dx[dst..dst + f].copy_from_slice(&dxt[b * f..(b + 1) * f]);
                }
            }
            gemm(dzm, MatRef::row_major(self.w_hh.data(), 4 * hid, hid), &mut dh_prev, false);
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        if need_input_grad {
            Ok(Some(Tensor::new(x.shape().to_vec(), dx)?))
        } else {
            Ok(None)
        }
    }
}
