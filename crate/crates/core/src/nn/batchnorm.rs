//! Batch normalization over (N, H, W) per channel, with running statistics
//! for inference. Reductions accumulate in f64 and run per channel in a fixed
//! order, keeping training bit-reproducible.

use super::{TensorRef, VisitFn};
use ndarray::{Array1, Array4, Axis};

pub struct BatchNorm2d {
    pub gamma: Array1<f32>,
    pub beta: Array1<f32>,
    pub grad_gamma: Array1<f32>,
    pub grad_beta: Array1<f32>,
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<Cache>,
}

struct Cache {
    x_hat: Array4<f32>,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    pub fn forward_train(&mut self, x: Array4<f32>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let count = (n * h * w) as f64;
        assert!(count >= 1.0);
        let mut y = x;
        let mut x_hat = Array4::<f32>::zeros(y.dim());
        let mut inv_std = vec![0.0f64; c];

        for ci in 0..c {
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            for v in y.index_axis(Axis(1), ci).iter() {
                let f = *v as f64;
                sum += f;
                sum_sq += f * f;
            }
            let mean = sum / count;
            let var = (sum_sq / count - mean * mean).max(0.0);
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = istd;

            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            self.running_mean[ci] =
                ((1.0 - self.momentum) * self.running_mean[ci] as f64 + self.momentum * mean) as f32;
            self.running_var[ci] =
                ((1.0 - self.momentum) * self.running_var[ci] as f64 + self.momentum * unbiased) as f32;

            let g = self.gamma[ci] as f64;
            let b = self.beta[ci] as f64;
            for (v, xh) in y
                .index_axis_mut(Axis(1), ci)
                .iter_mut()
                .zip(x_hat.index_axis_mut(Axis(1), ci).iter_mut())
            {
                let norm = (*v as f64 - mean) * istd;
                *xh = norm as f32;
                *v = (g * norm + b) as f32;
            }
        }
        self.cache = Some(Cache { x_hat, inv_std });
        y
    }

    pub fn forward_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        let (_, c, _, _) = x.dim();
        let mut y = x.clone();
        for ci in 0..c {
            let istd = 1.0 / (self.running_var[ci] as f64 + self.eps).sqrt();
            let scale = self.gamma[ci] as f64 * istd;
            let shift = self.beta[ci] as f64 - scale * self.running_mean[ci] as f64;
            for v in y.index_axis_mut(Axis(1), ci).iter_mut() {
                *v = (*v as f64 * scale + shift) as f32;
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let cache = self.cache.take().expect("backward without forward_train");
        let (n, c, h, w) = dy.dim();
        let count = (n * h * w) as f64;
        let mut dx = Array4::<f32>::zeros(dy.dim());

        for ci in 0..c {
            let x_hat = cache.x_hat.index_axis(Axis(1), ci);
            let dy_c = dy.index_axis(Axis(1), ci);
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for (d, xh) in dy_c.iter().zip(x_hat.iter()) {
                sum_dy += *d as f64;
                sum_dy_xhat += *d as f64 * *xh as f64;
            }
            self.grad_beta[ci] += sum_dy as f32;
            self.grad_gamma[ci] += sum_dy_xhat as f32;

            let g_istd = self.gamma[ci] as f64 * cache.inv_std[ci];
            let mean_dy = sum_dy / count;
            let mean_dy_xhat = sum_dy_xhat / count;
            for ((dst, d), xh) in
                dx.index_axis_mut(Axis(1), ci).iter_mut().zip(dy_c.iter()).zip(x_hat.iter())
            {
                *dst = (g_istd * (*d as f64 - mean_dy - *xh as f64 * mean_dy_xhat)) as f32;
            }
        }
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: VisitFn<'_>) {
        let shape = vec![self.gamma.len()];
        f(
            &format!("{prefix}.weight"),
            TensorRef {
                data: self.gamma.as_slice_mut().unwrap(),
                grad: Some(self.grad_gamma.as_slice_mut().unwrap()),
                shape: &shape,
            },
        );
        f(
            &format!("{prefix}.bias"),
            TensorRef {
                data: self.beta.as_slice_mut().unwrap(),
                grad: Some(self.grad_beta.as_slice_mut().unwrap()),
                shape: &shape,
            },
        );
        f(
            &format!("{prefix}.running_mean"),
            TensorRef { data: self.running_mean.as_slice_mut().unwrap(), grad: None, shape: &shape },
        );
        f(
            &format!("{prefix}.running_var"),
            TensorRef { data: self.running_var.as_slice_mut().unwrap(), grad: None, shape: &shape },
        );
    }
}
