//! Parameterized layers and the stateless activation/pooling kernels.

use crate::tensor::{gemm, gemm_a_t, gemm_b_t, Scalar, Tensor};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

/// Numerical floor added to variances before inversion.
pub(crate) const BN_EPS: f64 = 1e-5;
/// Fraction of the batch statistic blended into the running statistic per
/// training step.
pub(crate) const BN_MOMENTUM: f64 = 0.1;

fn uniform_init<S: Scalar, R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<S> {
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..n).map(|_| S::from_f64(dist.sample(rng))).collect()
}

/// Stride-1 2-D convolution with a square kernel and symmetric zero padding.
///
/// The weight is stored row-major as `[out_channels, in_channels * k * k]`,
/// which is exactly the left operand of the im2col matrix product.
#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub pad: usize,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            pad,
            weight: Tensor::from_vec(
                &[out_channels, fan_in],
                uniform_init(rng, out_channels * fan_in, bound),
            )
            .expect("conv weight shape"),
            bias: Tensor::from_vec(&[out_channels], uniform_init(rng, out_channels, bound))
                .expect("conv bias shape"),
        }
    }

    /// Output spatial size for an `h x w` input.
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.pad + 1 - self.kernel, w + 2 * self.pad + 1 - self.kernel)
    }

    /// Writes the im2col matrix of one sample into `col`, laid out as
    /// `[in_channels * k * k, oh * ow]`.
    fn im2col(&self, x: &[S], h: usize, w: usize, oh: usize, ow: usize, col: &mut [S]) {
        let k = self.kernel;
        let pad = self.pad as isize;
        debug_assert_eq!(col.len(), self.in_channels * k * k * oh * ow);
        let mut row = 0usize;
        for ci in 0..self.in_channels {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for di in 0..k {
                for dj in 0..k {
                    let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                    for oi in 0..oh {
                        let si = oi as isize + di as isize - pad;
                        let out_row = &mut dst[oi * ow..(oi + 1) * ow];
                        if si < 0 || si >= h as isize {
                            out_row.fill(S::ZERO);
                            continue;
                        }
                        let src_row = &plane[si as usize * w..(si as usize + 1) * w];
                        for (oj, o) in out_row.iter_mut().enumerate() {
                            let sj = oj as isize + dj as isize - pad;
                            *o = if sj < 0 || sj >= w as isize {
                                S::ZERO
                            } else {
                                src_row[sj as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatter-adds a column-space gradient back onto an input gradient,
    /// inverting [`im2col`](Self::im2col).
    fn col2im(&self, col: &[S], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [S]) {
        let k = self.kernel;
        let pad = self.pad as isize;
        let mut row = 0usize;
        for ci in 0..self.in_channels {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for di in 0..k {
                for dj in 0..k {
                    let src = &col[row * oh * ow..(row + 1) * oh * ow];
                    for oi in 0..oh {
                        let si = oi as isize + di as isize - pad;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[si as usize * w..(si as usize + 1) * w];
                        for (oj, &v) in src[oi * ow..(oi + 1) * ow].iter().enumerate() {
                            let sj = oj as isize + dj as isize - pad;
                            if sj >= 0 && sj < w as isize {
                                dst_row[sj as usize] += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Batched forward: `[N, C, H, W] -> [N, OC, OH, OW]`.
    pub fn forward(&self, x: &Tensor<S>, h: usize, w: usize) -> Tensor<S> {
        let n = x.outer();
        let (oh, ow) = self.out_hw(h, w);
        let kk = self.in_channels * self.kernel * self.kernel;
        let mut out = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        let mut col = vec![S::ZERO; kk * oh * ow];
        for i in 0..n {
            self.im2col(x.row(i), h, w, oh, ow, &mut col);
            let y = out.row_mut(i);
            gemm(
                self.out_channels,
                kk,
                oh * ow,
                S::ONE,
                self.weight.data(),
                &col,
                S::ZERO,
                y,
            );
            for (c, chunk) in y.chunks_exact_mut(oh * ow).enumerate() {
                let b = self.bias.data()[c];
                for v in chunk {
                    *v += b;
                }
            }
        }
        out
    }

    /// Batched backward. Returns `dx` and accumulates `dw`/`db` in place.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &Tensor<S>,
        dy: &Tensor<S>,
        h: usize,
        w: usize,
        dw: &mut Tensor<S>,
        db: &mut Tensor<S>,
    ) -> Tensor<S> {
        let n = x.outer();
        let (oh, ow) = self.out_hw(h, w);
        let kk = self.in_channels * self.kernel * self.kernel;
        let mut dx = Tensor::zeros(&[n, self.in_channels, h, w]);
        let mut col = vec![S::ZERO; kk * oh * ow];
        let mut dcol = vec![S::ZERO; kk * oh * ow];
        for i in 0..n {
            let dyi = dy.row(i);
            // dW += dY_i @ col_i^T  (col rebuilt from the cached input).
            self.im2col(x.row(i), h, w, oh, ow, &mut col);
            gemm_b_t(
                self.out_channels,
                oh * ow,
                kk,
                S::ONE,
                dyi,
                &col,
                S::ONE,
                dw.data_mut(),
            );
            // db += per-channel sums of dY_i.
            for (c, chunk) in dyi.chunks_exact(oh * ow).enumerate() {
                let mut acc = S::ZERO;
                for &v in chunk {
                    acc += v;
                }
                db.data_mut()[c] += acc;
            }
            // dcol = W^T @ dY_i, scattered back to image space.
            gemm_a_t(
                kk,
                self.out_channels,
                oh * ow,
                S::ONE,
                self.weight.data(),
                dyi,
                S::ZERO,
                &mut dcol,
            );
            self.col2im(&dcol, h, w, oh, ow, dx.row_mut(i));
        }
        dx
    }
}

/// Per-channel batch normalization over `[N, C, H, W]`.
///
/// Uses biased variance for both normalization and the running estimate, and
/// an exponential moving average with momentum [`BN_MOMENTUM`].
#[derive(Debug, Clone)]
pub struct BatchNorm2d<S> {
    pub channels: usize,
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
}

/// What the backward pass needs from a batch-norm forward.
#[derive(Debug, Clone)]
pub enum BnCache<S> {
    /// Training mode: normalized activations and per-channel `1/std`.
    Train { xhat: Tensor<S>, inv_std: Vec<S> },
    /// Inference mode: normalized activations and the frozen per-channel
    /// `1/std` from the running variance.
    Eval { xhat: Tensor<S>, inv_std: Vec<S> },
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Tensor::full(&[channels], S::ONE),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], S::ONE),
        }
    }

    /// Forward over `[N, C, H*W]`-shaped data. `train` selects batch
    /// statistics (and updates the running estimates) versus running
    /// statistics.
    pub fn forward(&mut self, x: &Tensor<S>, hw: usize, train: bool) -> (Tensor<S>, BnCache<S>) {
        let n = x.outer();
        let plane = hw;
        let count = S::from_usize(n * plane);
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![S::ZERO; self.channels];
        let eps = S::from_f64(BN_EPS);

        for c in 0..self.channels {
            let (mean, var) = if train {
                let mut sum = S::ZERO;
                let mut sum_sq = S::ZERO;
                for i in 0..n {
                    let row = &x.row(i)[c * plane..(c + 1) * plane];
                    for &v in row {
                        sum += v;
                        sum_sq += v * v;
                    }
                }
                let mean = sum / count;
                let var = (sum_sq / count - mean * mean).max(S::ZERO);
                let mom = S::from_f64(BN_MOMENTUM);
                let keep = S::ONE - mom;
                self.running_mean.data_mut()[c] = keep * self.running_mean.data()[c] + mom * mean;
                self.running_var.data_mut()[c] = keep * self.running_var.data()[c] + mom * var;
                (mean, var)
            } else {
                (self.running_mean.data()[c], self.running_var.data()[c])
            };
            let istd = S::ONE / (var + eps).sqrt();
            inv_std[c] = istd;
            let g = self.gamma.data()[c];
            let b = self.beta.data()[c];
            for i in 0..n {
                let xr = &x.row(i)[c * plane..(c + 1) * plane];
                let start = i * x.inner_len() + c * plane;
                for (j, &v) in xr.iter().enumerate() {
                    let h = (v - mean) * istd;
                    xhat.data_mut()[start + j] = h;
                    y.data_mut()[start + j] = g * h + b;
                }
            }
        }
        let cache = if train {
            BnCache::Train { xhat, inv_std }
        } else {
            BnCache::Eval { xhat, inv_std }
        };
        (y, cache)
    }

    /// Backward for both modes. In training mode the batch statistics are
    /// functions of the input, which adds the mean-removal terms; in
    /// inference mode the statistics are constants and the pass reduces to a
    /// per-channel rescale.
    pub fn backward(
        &self,
        cache: &BnCache<S>,
        dy: &Tensor<S>,
        hw: usize,
        dgamma: &mut Tensor<S>,
        dbeta: &mut Tensor<S>,
    ) -> Tensor<S> {
        let (xhat, inv_std, train) = match cache {
            BnCache::Train { xhat, inv_std } => (xhat, inv_std, true),
            BnCache::Eval { xhat, inv_std } => (xhat, inv_std, false),
        };
        let n = dy.outer();
        let plane = hw;
        let count = S::from_usize(n * plane);
        let mut dx = Tensor::zeros(dy.shape());
        for c in 0..self.channels {
            let g = self.gamma.data()[c];
            let istd = inv_std[c];
            let mut sum_dy = S::ZERO;
            let mut sum_dy_xhat = S::ZERO;
            for i in 0..n {
                let base = i * dy.inner_len() + c * plane;
                for j in 0..plane {
                    let d = dy.data()[base + j];
                    sum_dy += d;
                    sum_dy_xhat += d * xhat.data()[base + j];
                }
            }
            dgamma.data_mut()[c] += sum_dy_xhat;
            dbeta.data_mut()[c] += sum_dy;
            let mean_dy = sum_dy / count;
            let mean_dy_xhat = sum_dy_xhat / count;
            for i in 0..n {
                let base = i * dy.inner_len() + c * plane;
                for j in 0..plane {
                    let d = dy.data()[base + j];
                    dx.data_mut()[base + j] = if train {
                        g * istd * (d - mean_dy - xhat.data()[base + j] * mean_dy_xhat)
                    } else {
                        g * istd * d
                    };
                }
            }
        }
        dx
    }
}

/// Fully connected layer; weight stored row-major as
/// `[out_features, in_features]`.
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new<R: Rng>(rng: &mut R, in_features: usize, out_features: usize) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Linear {
            in_features,
            out_features,
            weight: Tensor::from_vec(
                &[out_features, in_features],
                uniform_init(rng, out_features * in_features, bound),
            )
            .expect("linear weight shape"),
            bias: Tensor::from_vec(&[out_features], uniform_init(rng, out_features, bound))
                .expect("linear bias shape"),
        }
    }

    /// `[N, in] -> [N, out]`.
    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let n = x.outer();
        let mut y = Tensor::zeros(&[n, self.out_features]);
        gemm_b_t(
            n,
            self.in_features,
            self.out_features,
            S::ONE,
            x.data(),
            self.weight.data(),
            S::ZERO,
            y.data_mut(),
        );
        for i in 0..n {
            for (v, &b) in y.row_mut(i).iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &Tensor<S>,
        dy: &Tensor<S>,
        dw: &mut Tensor<S>,
        db: &mut Tensor<S>,
    ) -> Tensor<S> {
        let n = x.outer();
        // dW += dY^T @ X.
        gemm_a_t(
            self.out_features,
            n,
            self.in_features,
            S::ONE,
            dy.data(),
            x.data(),
            S::ONE,
            dw.data_mut(),
        );
        for i in 0..n {
            for (g, &d) in db.data_mut().iter_mut().zip(dy.row(i)) {
                *g += d;
            }
        }
        // dX = dY @ W.
        let mut dx = Tensor::zeros(&[n, self.in_features]);
        gemm(
            n,
            self.out_features,
            self.in_features,
            S::ONE,
            dy.data(),
            self.weight.data(),
            S::ZERO,
            dx.data_mut(),
        );
        dx
    }
}

/// In-place ReLU returning the output; gradient uses `y > 0`, so the
/// subgradient at zero is zero.
pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = (*v).max(S::ZERO);
    }
    y
}

pub fn relu_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= S::ZERO {
            *d = S::ZERO;
        }
    }
    dx
}

/// 2x2 stride-2 max pooling over `[N, C, H, W]` with floor semantics; odd
/// trailing rows/columns are dropped. Returns the pooled tensor and the flat
/// within-sample argmax index of every output element (first occurrence wins
/// on ties).
pub fn max_pool2x2<S: Scalar>(x: &Tensor<S>, c: usize, h: usize, w: usize) -> (Tensor<S>, Vec<u32>) {
    let n = x.outer();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut idx = vec![0u32; n * c * oh * ow];
    for i in 0..n {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for ci in 0..c {
            let plane = &xi[ci * h * w..(ci + 1) * h * w];
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best = plane[(2 * oi) * w + 2 * oj];
                    let mut best_at = (2 * oi) * w + 2 * oj;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let at = (2 * oi + di) * w + (2 * oj + dj);
                        if plane[at] > best {
                            best = plane[at];
                            best_at = at;
                        }
                    }
                    let o = ci * oh * ow + oi * ow + oj;
                    yi[o] = best;
                    idx[i * c * oh * ow + o] = (ci * h * w + best_at) as u32;
                }
            }
        }
    }
    (y, idx)
}

pub fn max_pool2x2_backward<S: Scalar>(
    dy: &Tensor<S>,
    idx: &[u32],
    in_shape: &[usize],
) -> Tensor<S> {
    let mut dx = Tensor::zeros(in_shape);
    let inner = dx.inner_len();
    let n = dy.outer();
    let out_inner = dy.inner_len();
    for i in 0..n {
        let dxi = &mut dx.data_mut()[i * inner..(i + 1) * inner];
        for (o, &d) in dy.row(i).iter().enumerate() {
            dxi[idx[i * out_inner + o] as usize] += d;
        }
    }
    dx
}
