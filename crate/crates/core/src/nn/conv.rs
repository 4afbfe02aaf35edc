//! 2-D convolution lowered to one batched im2col + sgemm per call.
//!
//! The column matrix is laid out (C*KH*KW, N*OH*OW) so the whole batch runs
//! through a single gemm against the (M, C*KH*KW) weight matrix; backward
//! reuses the same lowering for both the weight and the input gradients.

use super::gemm::{gemm, Mat};
use super::{out_dim, TensorRef, VisitFn};
use ndarray::{Array1, Array4};
use rayon::prelude::*;

pub struct Conv2d {
    pub weight: Array4<f32>, // (out_ch, in_ch, kh, kw)
    pub bias: Option<Array1<f32>>,
    pub grad_weight: Array4<f32>,
    pub grad_bias: Option<Array1<f32>>,
    pub stride: usize,
    pub padding: usize,
    cache_input: Option<Array4<f32>>,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        with_bias: bool,
    ) -> Self {
        Conv2d {
            weight: Array4::zeros((out_ch, in_ch, kernel, kernel)),
            bias: with_bias.then(|| Array1::zeros(out_ch)),
            grad_weight: Array4::zeros((out_ch, in_ch, kernel, kernel)),
            grad_bias: with_bias.then(|| Array1::zeros(out_ch)),
            stride,
            padding,
            cache_input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = out_dim(h, self.kernel(), self.stride, self.padding, false)?;
        let ow = out_dim(w, self.kernel(), self.stride, self.padding, false)?;
        Some((oh, ow))
    }

    fn compute(&self, x: &Array4<f32>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let (m, wc, kh, kw) = self.weight.dim();
        assert_eq!(c, wc, "conv input channels mismatch");
        let (oh, ow) = self.output_hw(h, w).expect("degenerate conv geometry");
        let l = oh * ow;
        let k = c * kh * kw;

        let mut cols = vec![0.0f32; k * n * l];
        im2col(
            x.as_slice().expect("standard layout"),
            ImDims { n, c, h, w, kh, kw, stride: self.stride, pad: self.padding, oh, ow },
            &mut cols,
        );

        let w_slice = self.weight.as_slice().expect("standard layout");
        let mut y_flat = vec![0.0f32; m * n * l];
        gemm(m, k, n * l, 1.0, Mat::row_major(w_slice, k), Mat::row_major(&cols, n * l), 0.0, &mut y_flat);

        // scatter (M, N*L) -> (N, M, L), adding bias per output channel
        let mut y = vec![0.0f32; n * m * l];
        let bias = self.bias.as_ref().map(|b| b.as_slice().unwrap());
        y.par_chunks_mut(m * l).enumerate().for_each(|(ni, y_n)| {
            for mi in 0..m {
                let src = &y_flat[mi * n * l + ni * l..][..l];
                let dst = &mut y_n[mi * l..][..l];
                match bias {
                    Some(b) => {
                        let bv = b[mi];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = s + bv;
                        }
                    }
                    None => dst.copy_from_slice(src),
                }
            }
        });
        Array4::from_shape_vec((n, m, oh, ow), y).expect("shape matches")
    }

    pub fn forward_train(&mut self, x: Array4<f32>) -> Array4<f32> {
        let y = self.compute(&x);
        self.cache_input = Some(x);
        y
    }

    pub fn forward_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        self.compute(x)
    }

    /// Gradient w.r.t. the input; accumulates weight/bias gradients.
    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let x = self.cache_input.take().expect("backward without forward_train");
        let (n, c, h, w) = x.dim();
        let (m, _, kh, kw) = self.weight.dim();
        let (dn, dm, oh, ow) = dy.dim();
        assert_eq!((dn, dm), (n, m), "grad batch/channel mismatch");
        let l = oh * ow;
        let k = c * kh * kw;
        let dims = ImDims { n, c, h, w, kh, kw, stride: self.stride, pad: self.padding, oh, ow };

        // gather dy (N,M,L) -> (M, N*L)
        let dy_slice = dy.as_slice().expect("standard layout");
        let mut dy_flat = vec![0.0f32; m * n * l];
        dy_flat.par_chunks_mut(n * l).enumerate().for_each(|(mi, row)| {
            for ni in 0..n {
                row[ni * l..(ni + 1) * l].copy_from_slice(&dy_slice[(ni * m + mi) * l..][..l]);
            }
        });

        let mut cols = vec![0.0f32; k * n * l];
        im2col(x.as_slice().expect("standard layout"), dims, &mut cols);

        // dW += dY_flat (M, N*L) . cols^T (N*L, K)
        gemm(
            m,
            n * l,
            k,
            1.0,
            Mat::row_major(&dy_flat, n * l),
            Mat::transposed(&cols, n * l),
            1.0,
            self.grad_weight.as_slice_mut().expect("standard layout"),
        );

        if let Some(gb) = self.grad_bias.as_mut() {
            let gb = gb.as_slice_mut().unwrap();
            for mi in 0..m {
                let mut acc = 0.0f64;
                for v in &dy_flat[mi * n * l..(mi + 1) * n * l] {
                    acc += *v as f64;
                }
                gb[mi] += acc as f32;
            }
        }

        // dcols (K, N*L) = W^T (K, M) . dY_flat (M, N*L)
        let w_slice = self.weight.as_slice().expect("standard layout");
        let mut dcols = vec![0.0f32; k * n * l];
        gemm(
            k,
            m,
            n * l,
            1.0,
            Mat::transposed(w_slice, k),
            Mat::row_major(&dy_flat, n * l),
            0.0,
            &mut dcols,
        );

        let mut dx = vec![0.0f32; n * c * h * w];
        col2im(&dcols, dims, &mut dx);
        Array4::from_shape_vec((n, c, h, w), dx).expect("shape matches")
    }

    pub fn visit(&mut self, prefix: &str, f: VisitFn<'_>) {
        let shape = self.weight.shape().to_vec();
        f(
            &format!("{prefix}.weight"),
            TensorRef {
                data: self.weight.as_slice_mut().unwrap(),
                grad: Some(self.grad_weight.as_slice_mut().unwrap()),
                shape: &shape,
            },
        );
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), self.grad_bias.as_mut()) {
            let shape = b.shape().to_vec();
            f(
                &format!("{prefix}.bias"),
                TensorRef {
                    data: b.as_slice_mut().unwrap(),
                    grad: Some(gb.as_slice_mut().unwrap()),
                    shape: &shape,
                },
            );
        }
    }
}

#[derive(Clone, Copy)]
struct ImDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

/// Lower (N,C,H,W) into columns (C*KH*KW, N*OH*OW). Rows are independent, so
/// the work parallelizes over rows with disjoint output slices.
fn im2col(x: &[f32], d: ImDims, cols: &mut [f32]) {
    let l = d.oh * d.ow;
    let nl = d.n * l;
    cols.par_chunks_mut(nl).enumerate().for_each(|(row, out)| {
        let c = row / (d.kh * d.kw);
        let rem = row % (d.kh * d.kw);
        let ky = rem / d.kw;
        let kx = rem % d.kw;
        for ni in 0..d.n {
            let x_plane = &x[(ni * d.c + c) * d.h * d.w..][..d.h * d.w];
            let out_n = &mut out[ni * l..(ni + 1) * l];
            for oy in 0..d.oh {
                let iy = (oy * d.stride + ky) as i64 - d.pad as i64;
                let dst = &mut out_n[oy * d.ow..(oy + 1) * d.ow];
                if iy < 0 || iy >= d.h as i64 {
                    dst.fill(0.0);
                    continue;
                }
                let x_row = &x_plane[iy as usize * d.w..][..d.w];
                if d.stride == 1 {
                    let ix0 = kx as i64 - d.pad as i64;
                    let lo = (-ix0).max(0) as usize;
                    let hi = ((d.w as i64 - ix0).max(0) as usize).min(d.ow);
                    dst[..lo.min(d.ow)].fill(0.0);
                    if lo < hi {
                        dst[lo..hi]
                            .copy_from_slice(&x_row[(ix0 + lo as i64) as usize..(ix0 + hi as i64) as usize]);
                    }
                    dst[hi.max(lo.min(d.ow))..].fill(0.0);
                } else {
                    for (ox, slot) in dst.iter_mut().enumerate() {
                        let ix = (ox * d.stride + kx) as i64 - d.pad as i64;
                        *slot = if ix < 0 || ix >= d.w as i64 { 0.0 } else { x_row[ix as usize] };
                    }
                }
            }
        }
    });
}

/// Scatter-add columns back to (N,C,H,W); exact adjoint of `im2col`.
/// Parallel over samples, whose output planes are disjoint.
fn col2im(dcols: &[f32], d: ImDims, dx: &mut [f32]) {
    let l = d.oh * d.ow;
    let nl = d.n * l;
    dx.par_chunks_mut(d.c * d.h * d.w).enumerate().for_each(|(ni, dx_n)| {
        for row in 0..d.c * d.kh * d.kw {
            let c = row / (d.kh * d.kw);
            let rem = row % (d.kh * d.kw);
            let ky = rem / d.kw;
            let kx = rem % d.kw;
            let src = &dcols[row * nl + ni * l..][..l];
            let plane = &mut dx_n[c * d.h * d.w..][..d.h * d.w];
            for oy in 0..d.oh {
                let iy = (oy * d.stride + ky) as i64 - d.pad as i64;
                if iy < 0 || iy >= d.h as i64 {
                    continue;
                }
                let x_row = &mut plane[iy as usize * d.w..][..d.w];
                for ox in 0..d.ow {
                    let ix = (ox * d.stride + kx) as i64 - d.pad as i64;
                    if ix >= 0 && ix < d.w as i64 {
                        x_row[ix as usize] += src[oy * d.ow + ox];
                    }
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seed_rng, uniform_range};
    use rand_chacha::ChaCha8Rng;

    fn fill_random(data: &mut [f32], rng: &mut ChaCha8Rng, scale: f64) {
        for v in data {
            *v = uniform_range(rng, -scale, scale) as f32;
        }
    }

    fn random_conv(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Conv2d {
        let mut conv = Conv2d::new(in_ch, out_ch, kernel, stride, padding, bias);
        fill_random(conv.weight.as_slice_mut().unwrap(), rng, 0.5);
        if let Some(b) = conv.bias.as_mut() {
            fill_random(b.as_slice_mut().unwrap(), rng, 0.5);
        }
        conv
    }

    fn random_input(n: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array4<f32> {
        let mut x = Array4::zeros((n, c, h, w));
        fill_random(x.as_slice_mut().unwrap(), rng, 1.0);
        x
    }

    /// Reference direct convolution, triple loop, f64 accumulation.
    fn conv_naive(x: &Array4<f32>, conv: &Conv2d) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let (m, _, kh, kw) = conv.weight.dim();
        let (oh, ow) = conv.output_hw(h, w).unwrap();
        let mut y = Array4::zeros((n, m, oh, ow));
        for ni in 0..n {
            for mi in 0..m {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |b| b[mi] as f64);
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * conv.stride + ky) as i64 - conv.padding as i64;
                                    let ix = (ox * conv.stride + kx) as i64 - conv.padding as i64;
                                    if iy >= 0 && iy < h as i64 && ix >= 0 && ix < w as i64 {
                                        acc += x[(ni, ci, iy as usize, ix as usize)] as f64
                                            * conv.weight[(mi, ci, ky, kx)] as f64;
                                    }
                                }
                            }
                        }
                        y[(ni, mi, oy, ox)] = acc as f32;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = seed_rng(1, "conv_fwd", 0);
        for &(stride, padding, kernel, bias) in
            &[(1usize, 0usize, 1usize, true), (1, 1, 3, false), (2, 1, 3, true), (2, 3, 7, false), (2, 0, 3, true)]
        {
            let conv = random_conv(3, 5, kernel, stride, padding, bias, &mut rng);
            let x = random_input(2, 3, 11, 14, &mut rng);
            let got = conv.forward_eval(&x);
            let want = conv_naive(&x, &conv);
            assert_eq!(got.dim(), want.dim());
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() <= 1e-4 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn train_and_eval_forward_agree() {
        let mut rng = seed_rng(2, "conv_modes", 0);
        let mut conv = random_conv(4, 6, 3, 2, 1, true, &mut rng);
        let x = random_input(3, 4, 9, 9, &mut rng);
        let eval = conv.forward_eval(&x);
        let train = conv.forward_train(x);
        assert_eq!(eval, train);
    }

    /// Scalar probe loss sum(y * r) turns output grads into the fixed array r,
    /// letting central finite differences validate backward.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seed_rng(3, "conv_bwd", 0);
        for &(stride, padding) in &[(1usize, 1usize), (2, 1), (2, 0)] {
            let mut conv = random_conv(2, 3, 3, stride, padding, true, &mut rng);
            let x = random_input(2, 2, 7, 8, &mut rng);
            let mut r = conv.forward_eval(&x);
            fill_random(r.as_slice_mut().unwrap(), &mut rng, 1.0);

            let _ = conv.forward_train(x.clone());
            let dx = conv.backward(&r);

            let probe = |conv: &Conv2d, x: &Array4<f32>| -> f64 {
                conv.forward_eval(x).iter().zip(r.iter()).map(|(a, b)| *a as f64 * *b as f64).sum()
            };

            let h = 1e-2f32;
            // input gradient at a handful of coordinates
            for i in (0..x.len()).step_by(x.len() / 13) {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.as_slice_mut().unwrap()[i] += h;
                xm.as_slice_mut().unwrap()[i] -= h;
                let fd = (probe(&conv, &xp) - probe(&conv, &xm)) / (2.0 * h as f64);
                let an = dx.as_slice().unwrap()[i] as f64;
                assert!(
                    (fd - an).abs() <= 2e-2 * fd.abs().max(1e-2),
                    "dx[{i}] analytic {an} vs fd {fd} (stride {stride} pad {padding})"
                );
            }
            // weight gradient
            for i in (0..conv.weight.len()).step_by(conv.weight.len() / 11) {
                let an = conv.grad_weight.as_slice().unwrap()[i] as f64;
                let mut cp = random_conv(2, 3, 3, stride, padding, true, &mut seed_rng(0, "x", 0));
                cp.weight.assign(&conv.weight);
                cp.bias.as_mut().unwrap().assign(conv.bias.as_ref().unwrap());
                cp.weight.as_slice_mut().unwrap()[i] += h;
                let fp = probe(&cp, &x);
                cp.weight.as_slice_mut().unwrap()[i] -= 2.0 * h;
                let fm = probe(&cp, &x);
                let fd = (fp - fm) / (2.0 * h as f64);
                assert!(
                    (fd - an).abs() <= 2e-2 * fd.abs().max(1e-2),
                    "dw[{i}] analytic {an} vs fd {fd}"
                );
            }
            // bias gradient: dL/db[m] = sum of r over channel m
            for mi in 0..3 {
                let want: f64 =
                    r.index_axis(ndarray::Axis(1), mi).iter().map(|v| *v as f64).sum();
                let got = conv.grad_bias.as_ref().unwrap()[mi] as f64;
                assert!((want - got).abs() <= 1e-3 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gradients_accumulate_until_cleared() {
        let mut rng = seed_rng(4, "conv_acc", 0);
        let mut conv = random_conv(2, 2, 3, 1, 1, false, &mut rng);
        let x = random_input(1, 2, 5, 5, &mut rng);
        let dy = {
            let mut d = conv.forward_eval(&x);
            fill_random(d.as_slice_mut().unwrap(), &mut rng, 1.0);
            d
        };
        let _ = conv.forward_train(x.clone());
        let _ = conv.backward(&dy);
        let once = conv.grad_weight.clone();
        let _ = conv.forward_train(x);
        let _ = conv.backward(&dy);
        for (twice, one) in conv.grad_weight.iter().zip(once.iter()) {
            assert!((twice - 2.0 * one).abs() <= 1e-4 * one.abs().max(1e-3));
        }
    }
}
