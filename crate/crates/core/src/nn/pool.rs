//! Max pooling (with optional ceil mode) and global average pooling.

use super::out_dim;
use ndarray::{Array2, Array4};
use rayon::prelude::*;

pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub ceil_mode: bool,
    cache: Option<Cache>,
}

struct Cache {
    input_dim: (usize, usize, usize, usize),
    /// flat index into the (H, W) plane of the selected maximum, per output
    argmax: Vec<u32>,
    out_hw: (usize, usize),
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize, ceil_mode: bool) -> Self {
        MaxPool2d { kernel, stride, padding, ceil_mode, cache: None }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = out_dim(h, self.kernel, self.stride, self.padding, self.ceil_mode)?;
        let ow = out_dim(w, self.kernel, self.stride, self.padding, self.ceil_mode)?;
        Some((oh, ow))
    }

    fn compute(&self, x: &Array4<f32>, keep_argmax: bool) -> (Array4<f32>, Option<Vec<u32>>) {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = self.output_hw(h, w).expect("degenerate pool geometry");
        let x_slice = x.as_slice().expect("standard layout");
        let mut y = vec![0.0f32; n * c * oh * ow];
        let mut argmax = keep_argmax.then(|| vec![0u32; n * c * oh * ow]);

        let plane_in = h * w;
        let plane_out = oh * ow;
        let process = |plane_idx: usize, y_plane: &mut [f32], arg_plane: Option<&mut [u32]>| {
            let x_plane = &x_slice[plane_idx * plane_in..][..plane_in];
            let mut arg_plane = arg_plane;
            for oy in 0..oh {
                let y0 = (oy * self.stride) as i64 - self.padding as i64;
                let ys = y0.max(0) as usize;
                let ye = ((y0 + self.kernel as i64).min(h as i64)) as usize;
                for ox in 0..ow {
                    let x0 = (ox * self.stride) as i64 - self.padding as i64;
                    let xs = x0.max(0) as usize;
                    let xe = ((x0 + self.kernel as i64).min(w as i64)) as usize;
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0u32;
                    for iy in ys..ye {
                        for ix in xs..xe {
                            let v = x_plane[iy * w + ix];
                            if v > best {
                                best = v;
                                best_idx = (iy * w + ix) as u32;
                            }
                        }
                    }
                    y_plane[oy * ow + ox] = best;
                    if let Some(arg) = arg_plane.as_deref_mut() {
                        arg[oy * ow + ox] = best_idx;
                    }
                }
            }
        };

        match argmax.as_mut() {
            Some(arg) => {
                y.par_chunks_mut(plane_out)
                    .zip(arg.par_chunks_mut(plane_out))
                    .enumerate()
                    .for_each(|(idx, (yp, ap))| process(idx, yp, Some(ap)));
            }
            None => {
                y.par_chunks_mut(plane_out)
                    .enumerate()
                    .for_each(|(idx, yp)| process(idx, yp, None));
            }
        }
        (Array4::from_shape_vec((n, c, oh, ow), y).expect("shape"), argmax)
    }

    pub fn forward_train(&mut self, x: Array4<f32>) -> Array4<f32> {
        let (y, argmax) = self.compute(&x, true);
        let (_, _, oh, ow) = y.dim();
        self.cache = Some(Cache { input_dim: x.dim(), argmax: argmax.unwrap(), out_hw: (oh, ow) });
        y
    }

    pub fn forward_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        self.compute(x, false).0
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let cache = self.cache.take().expect("backward without forward_train");
        let (n, c, h, w) = cache.input_dim;
        let (oh, ow) = cache.out_hw;
        assert_eq!(dy.dim(), (n, c, oh, ow));
        let dy_slice = dy.as_slice().expect("standard layout");
        let mut dx = vec![0.0f32; n * c * h * w];
        let plane_in = h * w;
        let plane_out = oh * ow;
        dx.par_chunks_mut(plane_in).enumerate().for_each(|(idx, dx_plane)| {
            let d = &dy_slice[idx * plane_out..][..plane_out];
            let arg = &cache.argmax[idx * plane_out..][..plane_out];
            for i in 0..plane_out {
                dx_plane[arg[i] as usize] += d[i];
            }
        });
        Array4::from_shape_vec((n, c, h, w), dx).expect("shape")
    }
}

/// Mean over the spatial dimensions: (N, C, H, W) -> (N, C).
pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    let x_slice = x.as_slice().expect("standard layout");
    let plane = h * w;
    let mut y = Array2::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0f64;
            for v in &x_slice[(ni * c + ci) * plane..][..plane] {
                acc += *v as f64;
            }
            y[(ni, ci)] = (acc / plane as f64) as f32;
        }
    }
    y
}

/// Adjoint of `global_avg_pool`: spread each dy uniformly over the plane.
pub fn global_avg_pool_backward(dy: &Array2<f32>, spatial: (usize, usize)) -> Array4<f32> {
    let (n, c) = dy.dim();
    let (h, w) = spatial;
    let inv = 1.0 / (h * w) as f32;
    let mut dx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            let g = dy[(ni, ci)] * inv;
            dx.index_axis_mut(ndarray::Axis(0), ni)
                .index_axis_mut(ndarray::Axis(0), ci)
                .fill(g);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seed_rng, uniform_range};

    fn random_x(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Array4<f32> {
        let mut rng = seed_rng(seed, "pool_test", 0);
        let mut x = Array4::zeros((n, c, h, w));
        for v in x.iter_mut() {
            *v = uniform_range(&mut rng, -2.0, 2.0) as f32;
        }
        x
    }

    /// Direct reference pooling.
    fn pool_naive(x: &Array4<f32>, p: &MaxPool2d) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = p.output_hw(h, w).unwrap();
        let mut y = Array4::from_elem((n, c, oh, ow), f32::NEG_INFINITY);
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ky in 0..p.kernel {
                            for kx in 0..p.kernel {
                                let iy = (oy * p.stride + ky) as i64 - p.padding as i64;
                                let ix = (ox * p.stride + kx) as i64 - p.padding as i64;
                                if iy >= 0 && iy < h as i64 && ix >= 0 && ix < w as i64 {
                                    let v = x[(ni, ci, iy as usize, ix as usize)];
                                    if v > y[(ni, ci, oy, ox)] {
                                        y[(ni, ci, oy, ox)] = v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    #[test]
    fn forward_matches_direct_pooling() {
        for &(pad, ceil) in &[(1usize, false), (0, true)] {
            let pool = MaxPool2d::new(3, 2, pad, ceil);
            let x = random_x(2, 3, 11, 13, 5);
            assert_eq!(pool.forward_eval(&x), pool_naive(&x, &pool));
        }
    }

    #[test]
    fn backward_routes_gradient_to_argmax() {
        let mut pool = MaxPool2d::new(2, 2, 0, false);
        let mut x = Array4::<f32>::zeros((1, 1, 2, 2));
        x[(0, 0, 1, 0)] = 5.0; // unique max
        let y = pool.forward_train(x);
        assert_eq!(y[(0, 0, 0, 0)], 5.0);
        let mut dy = Array4::<f32>::zeros((1, 1, 1, 1));
        dy[(0, 0, 0, 0)] = 3.0;
        let dx = pool.backward(&dy);
        assert_eq!(dx[(0, 0, 1, 0)], 3.0);
        assert_eq!(dx.iter().map(|v| v.abs()).sum::<f32>(), 3.0);
    }

    #[test]
    fn ceil_mode_handles_partial_edge_windows() {
        let pool = MaxPool2d::new(3, 2, 0, true);
        let x = random_x(1, 1, 7, 8, 6);
        let y = pool.forward_eval(&x);
        assert_eq!(y.dim(), (1, 1, 3, 4));
        // last column window covers ix in {6, 7} only
        let manual = x[(0, 0, 4, 6)]
            .max(x[(0, 0, 4, 7)])
            .max(x[(0, 0, 5, 6)])
            .max(x[(0, 0, 5, 7)])
            .max(x[(0, 0, 6, 6)])
            .max(x[(0, 0, 6, 7)]);
        assert_eq!(y[(0, 0, 2, 3)], manual);
    }

    #[test]
    fn gap_means_and_distributes() {
        let x = random_x(2, 3, 4, 5, 7);
        let y = global_avg_pool(&x);
        for ni in 0..2 {
            for ci in 0..3 {
                let want: f64 = x
                    .index_axis(ndarray::Axis(0), ni)
                    .index_axis(ndarray::Axis(0), ci)
                    .iter()
                    .map(|v| *v as f64)
                    .sum::<f64>()
                    / 20.0;
                assert!((y[(ni, ci)] as f64 - want).abs() < 1e-6);
            }
        }
        let dy = Array2::from_shape_fn((2, 3), |(a, b)| (a * 3 + b) as f32);
        let dx = global_avg_pool_backward(&dy, (4, 5));
        assert_eq!(dx[(1, 2, 3, 4)], 5.0 / 20.0);
    }
}
