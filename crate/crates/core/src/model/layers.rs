//! Forward and backward kernels. Feature maps are `[channel][row][col]`.

use super::params::{Conv2d, Linear};
use super::real::Real;
use crate::{Error, Result};

pub(crate) fn check_finite<T: Real>(values: &[T], layer: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(layer.to_string()))
    }
}

impl<T: Real> Conv2d<T> {
    pub(crate) fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let o = |n: usize| (n + 2 * self.padding - self.kernel) / self.stride + 1;
        (o(h), o(w))
    }

    /// Calls `f(out_index, weight_index, input_index)` for every
    /// multiply-accumulate of the convolution.
    #[inline]
    fn for_each_tap(&self, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow) = self.out_size(h, w);
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        for o in 0..self.out_channels {
            for oi in 0..oh {
                for oj in 0..ow {
                    let out_idx = (o * oh + oi) * ow + oj;
                    for c in 0..self.in_channels {
                        let wbase = (o * self.in_channels + c) * k * k;
                        for ki in 0..k {
                            let ii = (oi * s) as isize + ki as isize - p;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            let row = (c * h + ii as usize) * w;
                            for kj in 0..k {
                                let jj = (oj * s) as isize + kj as isize - p;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                f(out_idx, wbase + ki * k + kj, row + jj as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn forward(&self, x: &[T], h: usize, w: usize) -> (Vec<T>, usize, usize) {
        let (oh, ow) = self.out_size(h, w);
        let mut out = vec![T::zero(); self.out_channels * oh * ow];
        for (o, chunk) in out.chunks_mut(oh * ow).enumerate() {
            chunk.fill(self.bias[o]);
        }
        self.for_each_tap(h, w, |oi, wi, xi| out[oi] += self.weight[wi] * x[xi]);
        (out, oh, ow)
    }

    /// Accumulates weight/bias gradients into `grad`; returns the input
    /// gradient when `want_dx`.
    pub(crate) fn backward(
        &self,
        x: &[T],
        h: usize,
        w: usize,
        dout: &[T],
        grad: &mut Conv2d<T>,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let (oh, ow) = self.out_size(h, w);
        for (o, chunk) in dout.chunks(oh * ow).enumerate() {
            grad.bias[o] += chunk.iter().copied().sum();
        }
        let gw = &mut grad.weight;
        if want_dx {
            let mut dx = vec![T::zero(); x.len()];
            self.for_each_tap(h, w, |oi, wi, xi| {
                let g = dout[oi];
                gw[wi] += g * x[xi];
                dx[xi] += g * self.weight[wi];
            });
            Some(dx)
        } else {
            self.for_each_tap(h, w, |oi, wi, xi| gw[wi] += dout[oi] * x[xi]);
            None
        }
    }
}

impl<T: Real> Linear<T> {
    pub(crate) fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (w, v)| acc + *w * *v))
            .collect()
    }

    pub(crate) fn backward(&self, x: &[T], dy: &[T], grad: &mut Linear<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.inputs];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

pub(crate) fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

pub(crate) fn relu<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

/// Zeroes `grad` wherever the ReLU output `activated` was not positive.
pub(crate) fn relu_backward<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Adaptive max pooling to a fixed `out_h x out_w` grid. Bin `i` covers
/// rows `floor(i*h/out_h) .. ceil((i+1)*h/out_h)`. Returns the pooled values
/// and, for each, the flat index of the (first) maximum.
pub(crate) fn adaptive_max_pool<T: Real>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> (Vec<T>, Vec<usize>) {
    let bin = |i: usize, n: usize, out: usize| (i * n / out, ((i + 1) * n).div_ceil(out));
    let mut vals = Vec::with_capacity(channels * out_h * out_w);
    let mut idx = Vec::with_capacity(channels * out_h * out_w);
    for c in 0..channels {
        for bi in 0..out_h {
            let (r0, r1) = bin(bi, h, out_h);
            for bj in 0..out_w {
                let (c0, c1) = bin(bj, w, out_w);
                let mut best = (T::neg_infinity(), usize::MAX);
                for r in r0..r1 {
                    for col in c0..c1 {
                        let i = (c * h + r) * w + col;
                        if x[i] > best.0 || best.1 == usize::MAX {
                            best = (x[i], i);
                        }
                    }
                }
                vals.push(best.0);
                idx.push(best.1);
            }
        }
    }
    (vals, idx)
}

/// Returns `x / |x|` and `|x|`.
pub(crate) fn l2_normalize<T: Real>(x: &[T], layer: &str) -> Result<(Vec<T>, T)> {
    let norm = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if !norm.is_finite() || norm <= T::zero() {
        return Err(Error::Numeric(layer.to_string()));
    }
    Ok((x.iter().map(|v| *v / norm).collect(), norm))
}

/// Gradient through `y = x / |x|`: `(dy - y (y . dy)) / |x|`.
pub(crate) fn l2_normalize_backward<T: Real>(y: &[T], norm: T, dy: &[T]) -> Vec<T> {
    let dot: T = y.iter().zip(dy).map(|(a, b)| *a * *b).sum();
    y.iter()
        .zip(dy)
        .map(|(yi, gi)| (*gi - *yi * dot) / norm)
        .collect()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}
