//! Convolution via im2col + GEMM on channels-last volumes.
//!
//! A 2-D convolution is a 3-D one with unit depth and kernel depth; any
//! leading dimensions in front of H×W×C are folded into the batch.

use crate::error::{shape_err, Result};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGeom {
    /// Input volume D×H×W.
    pub input: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn new(
        input: [usize; 3],
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(shape_err("convolution needs at least one channel"));
        }
        let mut output = [0; 3];
        for a in 0..3 {
            if kernel[a] == 0 || stride[a] == 0 {
                return Err(shape_err("kernel and stride must be positive"));
            }
            let span = input[a] + 2 * padding[a];
            if span < kernel[a] {
                return Err(shape_err(format!(
                    "kernel {:?} larger than padded input {:?}",
                    kernel, input
                )));
            }
            output[a] = (span - kernel[a]) / stride[a] + 1;
        }
        Ok(ConvGeom {
            input,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_channels
    }

    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    fn in_item_len(&self) -> usize {
        self.input.iter().product::<usize>() * self.in_channels
    }

    fn out_item_len(&self) -> usize {
        self.out_positions() * self.out_channels
    }

    /// Calls `f(patch_row, output_row, run)` for every patch row and output
    /// row (z, y). `run = (lo, hi, src)`: output columns `lo..hi` read input
    /// offsets `src + (x - lo) * stride * in_channels`, the rest see padding.
    /// `None` when the whole output row lies in padding.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, Option<(usize, usize, usize)>)) {
        let [d, h, w] = self.input;
        let [od, oh, ow] = self.output;
        let [kd, kh, kw] = self.kernel;
        let [sz, sy, sx] = self.stride;
        let [pz, py, px] = self.padding;
        let c = self.in_channels;
        let mut row = 0;
        for dz in 0..kd {
            for dy in 0..kh {
                for dx in 0..kw {
                    // output columns whose input x lies inside [0, w)
                    let lo = px.saturating_sub(dx).div_ceil(sx);
                    let hi = if w + px > dx { ((w + px - dx - 1) / sx + 1).min(ow) } else { 0 };
                    for ch in 0..c {
                        let mut out_row = 0;
                        for z in 0..od {
                            let iz = (z * sz + dz).wrapping_sub(pz);
                            for y in 0..oh {
                                let iy = (y * sy + dy).wrapping_sub(py);
                                let run = (iz < d && iy < h && lo < hi).then(|| {
                                    let ix = lo * sx + dx - px;
                                    (lo, hi, ((iz * h + iy) * w + ix) * c + ch)
                                });
                                f(row, out_row, run);
                                out_row += 1;
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// Unfolds one input item into a tap-major patch matrix: entry
    /// (r, position) lands at `col[r * ld + offset + position]`.
    pub fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T], ld: usize, offset: usize) {
        let ow = self.output[2];
        let step = self.stride[2] * self.in_channels;
        self.for_each_run(|r, oy, run| {
            let base = r * ld + offset + oy * ow;
            let dst = &mut col[base..base + ow];
            match run {
                None => dst.fill(T::zero()),
                Some((lo, hi, src)) => {
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if step == 1 {
                        dst[lo..hi].copy_from_slice(&x[src..src + hi - lo]);
                    } else {
                        for (o, v) in dst[lo..hi].iter_mut().zip(x[src..].iter().step_by(step)) {
                            *o = *v;
                        }
                    }
                }
            }
        });
    }

    /// Scatter-adds a patch matrix (same layout as `im2col`) onto one input item.
    pub fn col2im<T: Scalar>(&self, col: &[T], ld: usize, offset: usize, dx: &mut [T]) {
        let ow = self.output[2];
        let step = self.stride[2] * self.in_channels;
        self.for_each_run(|r, oy, run| {
            if let Some((lo, hi, src)) = run {
                let base = r * ld + offset + oy * ow;
                let from = &col[base + lo..base + hi];
                for (o, v) in dx[src..].iter_mut().step_by(step).zip(from) {
                    *o += *v;
                }
            }
        });
    }

    /// Items per im2col chunk, keeping the patch buffer near 8M elements.
    fn chunk_items(&self) -> usize {
        let per = self.patch_len() * self.out_positions();
        (8 << 20) / per.max(1)
    }
}

#[derive(Clone, Debug)]
pub struct Conv<T> {
    pub geom: ConvGeom,
    /// Cout × (kd·kh·kw·Cin).
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv<T> {
    pub fn new(geom: ConvGeom, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.len() != geom.out_channels * geom.patch_len() || bias.len() != geom.out_channels
        {
            return Err(shape_err("convolution parameter sizes disagree with geometry"));
        }
        Ok(Conv {
            geom,
            weight,
            bias,
            input: None,
        })
    }

    fn items(&self, x: &Tensor<T>) -> Result<usize> {
        let per = self.geom.in_item_len();
        if x.is_empty() || x.len() % per != 0 {
            return Err(shape_err(format!(
                "convolution input {:?} is not a whole number of {:?}×{} volumes",
                x.shape(),
                self.geom.input,
                self.geom.in_channels
            )));
        }
        Ok(x.len() / per)
    }

    /// `out_shape` is the full output shape (batch included).
    pub fn forward(&mut self, x: Tensor<T>, out_shape: Vec<usize>) -> Result<Tensor<T>> {
        let g = &self.geom;
        let items = self.items(&x)?;
        let (p, k, co, il) = (g.out_positions(), g.patch_len(), g.out_channels, g.in_item_len());
        let chunk = g.chunk_items().clamp(1, items);
        let mut out = vec![T::zero(); items * p * co];
        let mut col = vec![T::zero(); k * p * chunk];
        let w = MatRef::row_major(self.weight.data(), co, k).t();
        for first in (0..items).step_by(chunk) {
            let n = chunk.min(items - first);
            let ld = n * p;
            for j in 0..n {
                let i = first + j;
                g.im2col(&x.data()[i * il..(i + 1) * il], &mut col, ld, j * p);
            }
            let dst = &mut out[first * p * co..(first + n) * p * co];
            gemm(MatRef::row_major(&col[..k * ld], k, ld).t(), w, dst, false);
        }
        for row in out.chunks_exact_mut(co) {
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
            .ok_or_else(|| shape_err("convolution backward before forward"))?;
        let g = self.geom.clone();
        let items = self.items(&x)?;
        let (p, k, co, il) = (g.out_positions(), g.patch_len(), g.out_channels, g.in_item_len());
        if grad.len() != items * g.out_item_len() {
            return Err(shape_err("convolution output gradient has the wrong size"));
        }
        let chunk = g.chunk_items().clamp(1, items);
        let mut col = vec![T::zero(); k * p * chunk];
        let mut dx = vec![T::zero(); if need_input_grad { x.len() } else { 0 }];
        {
            let (w, dw) = self.weight.data_and_grad_mut();
            let w: &[T] = w;
            for first in (0..items).step_by(chunk) {
                let n = chunk.min(items - first);
                let ld = n * p;
                let gi = &grad.data()[first * p * co..(first + n) * p * co];
                for j in 0..n {
                    let i = first + j;
                    g.im2col(&x.data()[i * il..(i + 1) * il], &mut col, ld, j * p);
                }
                // dW (co×k) += gradᵀ (co×ld) · patches (ld×k)
                gemm(
                    MatRef::row_major(gi, ld, co).t(),
                    MatRef::row_major(&col[..k * ld], k, ld).t(),
                    dw,
                    true,
                );
                if need_input_grad {
                    // d patches (k×ld) = Wᵀ (k×co) · gradᵀ (co×ld)
                    gemm(
                        MatRef::row_major(w, co, k).t(),
                        MatRef::row_major(gi, ld, co).t(),
                        &mut col[..k * ld],
                        false,
                    );
                    for j in 0..n {
                        let i = first + j;
                        g.col2im(&col, ld, j * p, &mut dx[i * il..(i + 1) * il]);
                    }
                }
            }
        }
        let db = self.bias.grad_mut();
        for row in grad.data().chunks_exact(co) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += *v;
            }
        }
        if need_input_grad {
            Ok(Some(Tensor::new(x.shape().to_vec(), dx)?))
        } else {
            Ok(None)
        }
    }
}

/// Non-overlapping max pooling (stride equals window, trailing remainder dropped).
#[derive(Clone, Debug)]
pub struct MaxPool {
    pub input: [usize; 3],
    pub channels: usize,
    pub window: [usize; 3],
    pub output: [usize; 3],
    /// Per output element, the index of the winning input element.
    argmax: Vec<u32>,
    in_shape: Vec<usize>,
}

impl MaxPool {
    pub fn new(input: [usize; 3], channels: usize, window: [usize; 3]) -> Result<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            if window[a] == 0 || window[a] > input[a] {
                return Err(shape_err(format!(
                    "pool window {window:?} does not fit input {input:?}"
                )));
            }
            output[a] = input[a] / window[a];
        }
        Ok(MaxPool {
            input,
            channels,
            window,
            output,
            argmax: Vec::new(),
            in_shape: Vec::new(),
        })
    }

    fn in_item_len(&self) -> usize {
        self.input.iter().product::<usize>() * self.channels
    }

    fn out_item_len(&self) -> usize {
        self.output.iter().product::<usize>() * self.channels
    }

    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }

    pub fn forward<T: Scalar>(&mut self, x: Tensor<T>, out_shape: Vec<usize>) -> Result<Tensor<T>> {
        let per = self.in_item_len();
        if x.is_empty() || x.len() % per != 0 {
            return Err(shape_err(format!("pool input {:?} has the wrong size", x.shape())));
        }
        let items = x.len() / per;
        let [_, h, w] = self.input;
        let [od, oh, ow] = self.output;
        let [wd, wh, ww] = self.window;
        let c = self.channels;
        let mut out = Vec::with_capacity(items * self.out_item_len());
        self.argmax.clear();
        self.argmax.reserve(items * self.out_item_len());
        let data = x.data();
        for i in 0..items {
            let base = i * per;
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        for ch in 0..c {
                            let mut best = T::neg_infinity();
                            let mut arg = 0usize;
                            for dz in 0..wd {
                                for dy in 0..wh {
                                    for dx in 0..ww {
                                        let idx = base
                                            + (((z * wd + dz) * h + y * wh + dy) * w + xx * ww + dx)
                                                * c
                                            + ch;
                                        // strict comparison: ties keep the first element
                                        if data[idx] > best || (dz == 0 && dy == 0 && dx == 0) {
                                            best = data[idx];
                                            arg = idx;
                                        }
                                    }
                                }
                            }
                            out.push(best);
                            self.argmax.push(arg as u32);
                        }
                    }
                }
            }
        }
        self.in_shape = x.shape().to_vec();
        Tensor::new(out_shape, out)
    }

    pub fn backward<T: Scalar>(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        if grad.len() != self.argmax.len() {
            return Err(shape_err("pool output gradient has the wrong size"));
        }
        let mut dx = Tensor::zeros(self.in_shape.clone());
        let d = dx.data_mut();
        for (g, &a) in grad.data().iter().zip(&self.argmax) {
            d[a as usize] += *g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution, the reference for im2col + GEMM.
    #[allow(clippy::too_many_arguments)]
    fn direct_conv(
        x: &[f64],
        w: &[f64],
        b: &[f64],
        g: &ConvGeom,
    ) -> Vec<f64> {
        let [d, h, wd] = g.input;
        let [od, oh, ow] = g.output;
        let [kd, kh, kw] = g.kernel;
        let (ci, co) = (g.in_channels, g.out_channels);
        let mut out = vec![0.0; od * oh * ow * co];
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    for o in 0..co {
                        let mut acc = b[o];
                        for a in 0..kd {
                            for bb in 0..kh {
                                for cc in 0..kw {
                                    let iz = (z * g.stride[0] + a) as isize - g.padding[0] as isize;
                                    let iy = (y * g.stride[1] + bb) as isize - g.padding[1] as isize;
                                    let ix = (xx * g.stride[2] + cc) as isize - g.padding[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 {
                                        continue;
                                    }
                                    let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                    if iz >= d || iy >= h || ix >= wd {
                                        continue;
                                    }
                                    for c in 0..ci {
                                        let xv = x[((iz * h + iy) * wd + ix) * ci + c];
                                        let wv = w[o * g.patch_len() + ((a * kh + bb) * kw + cc) * ci + c];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out[((z * oh + y) * ow + xx) * co + o] = acc;
                    }
                }
            }
        }
        out
    }

    fn wave(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * f).sin()).collect()
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        let cases = [
            ([3, 5, 4], 2, 3, [3, 3, 3], [1, 1, 1], [1, 1, 1]),
            ([4, 6, 7], 1, 2, [2, 3, 2], [2, 1, 2], [0, 1, 1]),
            ([1, 5, 5], 3, 4, [1, 3, 3], [1, 2, 2], [0, 1, 0]),
        ];
        for (input, ci, co, kernel, stride, padding) in cases {
            let g = ConvGeom::new(input, ci, co, kernel, stride, padding).unwrap();
            let x = wave(2 * g.in_item_len(), 0.7);
            let w = wave(co * g.patch_len(), 0.31);
            let b = wave(co, 1.3);
            let want: Vec<f64> = x
                .chunks(g.in_item_len())
                .flat_map(|xi| direct_conv(xi, &w, &b, &g))
                .collect();
            let mut conv = Conv::new(
                g.clone(),
                Tensor::new(vec![co, g.patch_len()], w).unwrap(),
                Tensor::new(vec![co], b).unwrap(),
            )
            .unwrap();
            let xt = Tensor::new(vec![2, g.in_item_len()], x).unwrap();
            let out = conv.forward(xt, vec![want.len()]).unwrap();
            for (a, b) in out.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom::new([3, 4, 5], 2, 1, [3, 2, 3], [1, 2, 1], [1, 0, 1]).unwrap();
        let x = wave(g.in_item_len(), 0.9);
        let c = wave(g.out_positions() * g.patch_len(), 0.23);
        let ld = g.out_positions();
        let mut col = vec![0.0; c.len()];
        g.im2col(&x, &mut col, ld, 0);
        let mut back = vec![0.0; x.len()];
        g.col2im(&c, ld, 0, &mut back);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pooling_picks_window_maxima() {
        let mut pool = MaxPool::new([2, 4, 4], 1, [2, 2, 2]).unwrap();
        let x: Vec<f64> = (0..32).map(|i| ((i * 7) % 32) as f64).collect();
        let xt = Tensor::new(vec![1, 2, 4, 4, 1], x.clone()).unwrap();
        let out = pool.forward(xt, vec![1, 1, 2, 2, 1]).unwrap();
        for (o, &a) in out.data().iter().zip(pool.argmax()) {
            assert_eq!(*o, x[a as usize]);
        }
        assert_eq!(out.data(), &[28.0, 30.0, 31.0, 29.0]);
        let back = pool.backward(Tensor::new(vec![4], vec![1.0; 4]).unwrap()).unwrap();
        assert_eq!(back.data().iter().sum::<f64>(), 4.0);
        assert!(MaxPool::new([1, 4, 4], 1, [2, 2, 2]).is_err());
    }

    #[test]
    fn bad_geometry_is_rejected() {
        assert!(ConvGeom::new([1, 2, 2], 1, 1, [3, 3, 3], [1, 1, 1], [0, 0, 0]).is_err());
        assert!(ConvGeom::new([4, 4, 4], 1, 1, [3, 3, 3], [0, 1, 1], [1, 1, 1]).is_err());
    }
}
