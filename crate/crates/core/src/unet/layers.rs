//! Forward and backward kernels of the network's layer types.
//!
//! Every kernel is a pure function of its inputs. Work is split over disjoint
//! output planes and each output element is accumulated in a fixed order, so
//! results do not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// 2-D convolution geometry with "same" zero padding. Dilation applies to the
/// frequency axis only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_t: usize,
    pub kernel_f: usize,
    pub dilation_f: usize,
}

impl ConvGeom {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_t * self.kernel_f
    }

    fn pad_t(&self) -> usize {
        (self.kernel_t - 1) / 2
    }

    fn pad_f(&self) -> usize {
        (self.kernel_f - 1) / 2 * self.dilation_f
    }

    /// Offsets `(dt, df)` of kernel tap `(i, j)`.
    fn offset(&self, i: usize, j: usize) -> (isize, isize) {
        (
            i as isize - self.pad_t() as isize,
            (j * self.dilation_f) as isize - self.pad_f() as isize,
        )
    }
}

/// Output index range `lo..hi` for which `o + d` stays inside `0..len`.
#[inline]
fn valid(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

fn check_channels<T: Scalar>(x: &Tensor<T>, expected: usize, what: &str) -> Result<()> {
    if x.channels() != expected {
        return Err(Error::Shape(format!(
            "{what} expects {expected} input channels, got {}",
            x.channels()
        )));
    }
    Ok(())
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &[T], b: &[T], g: &ConvGeom) -> Result<Tensor<T>> {
    check_channels(x, g.in_channels, "convolution")?;
    let [n, _, tl, fl] = x.shape();
    let mut y = Tensor::zeros([n, g.out_channels, tl, fl]);
    let k = g.kernel_t * g.kernel_f;
    par::for_each_chunk_mut(y.data_mut(), tl * fl, |plane, out| {
        let (ni, oc) = (plane / g.out_channels, plane % g.out_channels);
        out.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..g.in_channels {
            let xin = x.plane_slice(ni, ic);
            let wk = &w[(oc * g.in_channels + ic) * k..][..k];
            for i in 0..g.kernel_t {
                for j in 0..g.kernel_f {
                    let wv = wk[i * g.kernel_f + j];
                    let (dt, df) = g.offset(i, j);
                    let (t0, t1) = valid(tl, dt);
                    let (f0, f1) = valid(fl, df);
                    for t in t0..t1 {
                        let src = &xin[(t as isize + dt) as usize * fl..][..fl];
                        let dst = &mut out[t * fl..(t + 1) * fl];
                        for f in f0..f1 {
                            dst[f] += wv * src[(f as isize + df) as usize];
                        }
                    }
                }
            }
        }
    });
    Ok(y)
}

/// Gradients `(dx, dw, db)` of a convolution given its input and `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &[T],
    gy: &Tensor<T>,
    g: &ConvGeom,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, _, tl, fl] = x.shape();
    let k = g.kernel_t * g.kernel_f;

    let mut gb = vec![T::zero(); g.out_channels];
    for ni in 0..n {
        for (oc, acc) in gb.iter_mut().enumerate() {
            *acc += gy.plane_slice(ni, oc).iter().copied().sum::<T>();
        }
    }

    let mut gw = vec![T::zero(); g.weight_len()];
    par::for_each_chunk_mut(&mut gw, g.in_channels * k, |oc, gw_oc| {
        for ni in 0..n {
            let gyp = gy.plane_slice(ni, oc);
            for ic in 0..g.in_channels {
                let xin = x.plane_slice(ni, ic);
                for i in 0..g.kernel_t {
                    for j in 0..g.kernel_f {
                        let (dt, df) = g.offset(i, j);
                        let (t0, t1) = valid(tl, dt);
                        let (f0, f1) = valid(fl, df);
                        let mut acc = T::zero();
                        for t in t0..t1 {
                            let src = &xin[(t as isize + dt) as usize * fl..][..fl];
                            let gr = &gyp[t * fl..(t + 1) * fl];
                            for f in f0..f1 {
                                acc += gr[f] * src[(f as isize + df) as usize];
                            }
                        }
                        gw_oc[ic * k + i * g.kernel_f + j] += acc;
                    }
                }
            }
        }
    });

    let mut gx = Tensor::zeros(x.shape());
    par::for_each_chunk_mut(gx.data_mut(), tl * fl, |plane, out| {
        let (ni, ic) = (plane / g.in_channels, plane % g.in_channels);
        for oc in 0..g.out_channels {
            let gyp = gy.plane_slice(ni, oc);
            let wk = &w[(oc * g.in_channels + ic) * k..][..k];
            for i in 0..g.kernel_t {
                for j in 0..g.kernel_f {
                    let wv = wk[i * g.kernel_f + j];
                    let (dt, df) = g.offset(i, j);
                    let (t0, t1) = valid(tl, dt);
                    let (f0, f1) = valid(fl, df);
                    for t in t0..t1 {
                        let gr = &gyp[t * fl..(t + 1) * fl];
                        let dst = &mut out[(t as isize + dt) as usize * fl..][..fl];
                        for f in f0..f1 {
                            dst[(f as isize + df) as usize] += wv * gr[f];
                        }
                    }
                }
            }
        }
    });
    (gx, gw, gb)
}

/// Values kept from a training-mode batch normalization.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Per-channel mean and biased variance over batch, time and frequency.
fn channel_moments<T: Scalar>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, _, _] = x.shape();
    let m = T::of((n * x.plane()) as f64);
    let stats = par::map_range(c, |ci| {
        let mut sum = T::zero();
        for ni in 0..n {
            sum += x.plane_slice(ni, ci).iter().copied().sum::<T>();
        }
        let mean = sum / m;
        let mut sq = T::zero();
        for ni in 0..n {
            for &v in x.plane_slice(ni, ci) {
                sq += (v - mean) * (v - mean);
            }
        }
        (mean, sq / m)
    });
    stats.into_iter().unzip()
}

fn affine_per_channel<T: Scalar>(x: &Tensor<T>, scale: &[T], shift: &[T]) -> Tensor<T> {
    let c = x.channels();
    let mut y = x.clone();
    par::for_each_chunk_mut(y.data_mut(), x.plane(), |plane, out| {
        let ci = plane % c;
        out.iter_mut().for_each(|v| *v = *v * scale[ci] + shift[ci]);
    });
    y
}

/// Training-mode batch normalization with batch statistics.
pub fn batch_norm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Tensor<T>, BatchNormCache<T>) {
    let (mean, var) = channel_moments(x);
    let inv_std: Vec<T> = var.iter().map(|&v| (v + T::of(eps)).sqrt().recip()).collect();
    let shift: Vec<T> = mean.iter().zip(&inv_std).map(|(&m, &s)| -m * s).collect();
    let xhat = affine_per_channel(x, &inv_std, &shift);
    let y = affine_per_channel(&xhat, gamma, beta);
    (
        y,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

/// Inference-mode batch normalization with running statistics.
pub fn batch_norm_infer<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
) -> Tensor<T> {
    let scale: Vec<T> = gamma
        .iter()
        .zip(running_var)
        .map(|(&g, &v)| g / (v + T::of(eps)).sqrt())
        .collect();
    let shift: Vec<T> = beta
        .iter()
        .zip(running_mean)
        .zip(&scale)
        .map(|((&b, &m), &s)| b - m * s)
        .collect();
    affine_per_channel(x, &scale, &shift)
}

/// Gradients `(dx, dgamma, dbeta)` of training-mode batch normalization.
pub fn batch_norm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    gy: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, c, _, _] = gy.shape();
    let m = T::of((n * gy.plane()) as f64);
    let sums = par::map_range(c, |ci| {
        let (mut sg, mut sgx) = (T::zero(), T::zero());
        for ni in 0..n {
            for (&d, &xh) in gy.plane_slice(ni, ci).iter().zip(cache.xhat.plane_slice(ni, ci)) {
                sg += d;
                sgx += d * xh;
            }
        }
        (sg, sgx)
    });
    let (gbeta, ggamma): (Vec<T>, Vec<T>) = sums.iter().copied().unzip();
    let mut gx = gy.clone();
    par::for_each_chunk_mut(gx.data_mut(), gy.plane(), |plane, out| {
        let (ni, ci) = (plane / c, plane % c);
        let k = gamma[ci] * cache.inv_std[ci] / m;
        let (sg, sgx) = sums[ci];
        for (o, &xh) in out.iter_mut().zip(cache.xhat.plane_slice(ni, ci)) {
            *o = k * (m * *o - sg - xh * sgx);
        }
    });
    (gx, ggamma, gbeta)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let mut gx = gy.clone();
    for (g, &v) in gx.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    gx
}

/// Max pooling over non-overlapping frequency windows of `factor` bins.
/// Returns the pooled tensor and the winning offset of every window; ties go
/// to the lowest index.
pub fn max_pool_freq<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<(Tensor<T>, Vec<u8>)> {
    let [n, c, tl, fl] = x.shape();
    if factor == 0 || fl % factor != 0 || factor > u8::MAX as usize {
        return Err(Error::Shape(format!(
            "cannot pool {fl} bins by a factor of {factor}"
        )));
    }
    let fo = fl / factor;
    let mut y = Tensor::zeros([n, c, tl, fo]);
    let mut arg = vec![0u8; n * c * tl * fo];
    for (row, (out, a)) in y
        .data_mut()
        .chunks_mut(fo)
        .zip(arg.chunks_mut(fo))
        .enumerate()
    {
        let src = &x.data()[row * fl..(row + 1) * fl];
        for f in 0..fo {
            let win = &src[f * factor..(f + 1) * factor];
            let mut best = 0;
            for (k, &v) in win.iter().enumerate().skip(1) {
                if v > win[best] {
                    best = k;
                }
            }
            out[f] = win[best];
            a[f] = best as u8;
        }
    }
    Ok((y, arg))
}

pub fn max_pool_freq_backward<T: Scalar>(
    gy: &Tensor<T>,
    argmax: &[u8],
    factor: usize,
) -> Tensor<T> {
    let [n, c, tl, fo] = gy.shape();
    let fl = fo * factor;
    let mut gx = Tensor::zeros([n, c, tl, fl]);
    for (row, (g, a)) in gy.data().chunks(fo).zip(argmax.chunks(fo)).enumerate() {
        let dst = &mut gx.data_mut()[row * fl..(row + 1) * fl];
        for f in 0..fo {
            dst[f * factor + a[f] as usize] = g[f];
        }
    }
    gx
}

/// Transposed convolution along frequency with kernel and stride `factor`;
/// `w` is laid out `[in][out][factor]`.
pub fn up_conv_freq<T: Scalar>(
    x: &Tensor<T>,
    w: &[T],
    b: &[T],
    out_channels: usize,
    factor: usize,
) -> Result<Tensor<T>> {
    let [n, c, tl, fl] = x.shape();
    if w.len() != c * out_channels * factor {
        return Err(Error::Shape(format!(
            "transposed convolution weights have {} values for {c} -> {out_channels}",
            w.len()
        )));
    }
    let mut y = Tensor::zeros([n, out_channels, tl, fl * factor]);
    par::for_each_chunk_mut(y.data_mut(), tl * fl * factor, |plane, out| {
        let (ni, oc) = (plane / out_channels, plane % out_channels);
        out.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..c {
            let xin = x.plane_slice(ni, ic);
            let wk = &w[(ic * out_channels + oc) * factor..][..factor];
            for (o, &v) in out.chunks_mut(factor).zip(xin) {
                for (ok, &wv) in o.iter_mut().zip(wk) {
                    *ok += v * wv;
                }
            }
        }
    });
    Ok(y)
}

pub fn up_conv_freq_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &[T],
    gy: &Tensor<T>,
    factor: usize,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, c, _, _] = x.shape();
    let out_channels = gy.channels();
    let mut gb = vec![T::zero(); out_channels];
    for ni in 0..n {
        for (oc, acc) in gb.iter_mut().enumerate() {
            *acc += gy.plane_slice(ni, oc).iter().copied().sum::<T>();
        }
    }
    let mut gw = vec![T::zero(); w.len()];
    par::for_each_chunk_mut(&mut gw, out_channels * factor, |ic, gw_ic| {
        for ni in 0..n {
            let xin = x.plane_slice(ni, ic);
            for oc in 0..out_channels {
                let gyp = gy.plane_slice(ni, oc);
                for k in 0..factor {
                    let mut acc = T::zero();
                    for (g, &v) in gyp.chunks(factor).zip(xin) {
                        acc += g[k] * v;
                    }
                    gw_ic[oc * factor + k] += acc;
                }
            }
        }
    });
    let mut gx = Tensor::zeros(x.shape());
    par::for_each_chunk_mut(gx.data_mut(), x.plane(), |plane, out| {
        let (ni, ic) = (plane / c, plane % c);
        for oc in 0..out_channels {
            let gyp = gy.plane_slice(ni, oc);
            let wk = &w[(ic * out_channels + oc) * factor..][..factor];
            for (o, g) in out.iter_mut().zip(gyp.chunks(factor)) {
                for (&gv, &wv) in g.iter().zip(wk) {
                    *o += gv * wv;
                }
            }
        }
    });
    (gx, gw, gb)
}

/// Per-`(sample, channel)` multipliers of spatial dropout: `0` for dropped
/// feature maps, `1 / (1 - p)` for kept ones.
pub fn dropout_mask<T: Scalar>(batch: usize, channels: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..batch * channels)
        .map(|_| {
            if p > 0.0 && rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Scales every `(sample, channel)` plane by its multiplier. Also the
/// backward pass of spatial dropout.
pub fn scale_planes<T: Scalar>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut y = x.clone();
    par::for_each_chunk_mut(y.data_mut(), x.plane(), |plane, out| {
        let s = mask[plane];
        out.iter_mut().for_each(|v| *v *= s);
    });
    y
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| (T::one() + (-v).exp()).recip())
}

/// Gradient of the sigmoid given its output.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let mut gx = gy.clone();
    for (g, &s) in gx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (T::one() - s);
    }
    gx
}

/// Mean squared error and its gradient with respect to `y`.
pub fn mse_loss<T: Scalar>(y: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if y.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            y.shape(),
            target.shape()
        )));
    }
    let count = T::of(y.data().len() as f64);
    let mut loss = T::zero();
    let mut g = Tensor::zeros(y.shape());
    for ((gv, &a), &b) in g.data_mut().iter_mut().zip(y.data()).zip(target.data()) {
        let d = a - b;
        loss += d * d;
        *gv = T::of(2.0) * d / count;
    }
    Ok((loss / count, g))
}
