//! Fully connected layer: y = x W^T + b.

use super::gemm::{gemm, Mat};
use super::{TensorRef, VisitFn};
use ndarray::{Array1, Array2};

pub struct Linear {
    pub weight: Array2<f32>, // (out_features, in_features)
    pub bias: Array1<f32>,
    pub grad_weight: Array2<f32>,
    pub grad_bias: Array1<f32>,
    cache_input: Option<Array2<f32>>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Linear {
            weight: Array2::zeros((out_features, in_features)),
            bias: Array1::zeros(out_features),
            grad_weight: Array2::zeros((out_features, in_features)),
            grad_bias: Array1::zeros(out_features),
            cache_input: None,
        }
    }

    fn compute(&self, x: &Array2<f32>) -> Array2<f32> {
        let (n, f) = x.dim();
        let (m, wf) = self.weight.dim();
        assert_eq!(f, wf, "linear input features mismatch");
        let mut y = vec![0.0f32; n * m];
        // y (N, M) = x (N, F) . W^T (F, M)
        gemm(
            n,
            f,
            m,
            1.0,
            Mat::row_major(x.as_slice().expect("standard layout"), f),
            Mat::transposed(self.weight.as_slice().expect("standard layout"), f),
            0.0,
            &mut y,
        );
        let mut y = Array2::from_shape_vec((n, m), y).expect("shape");
        for mut row in y.rows_mut() {
            row += &self.bias;
        }
        y
    }

    pub fn forward_train(&mut self, x: Array2<f32>) -> Array2<f32> {
        let y = self.compute(&x);
        self.cache_input = Some(x);
        y
    }

    pub fn forward_eval(&self, x: &Array2<f32>) -> Array2<f32> {
        self.compute(x)
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let x = self.cache_input.take().expect("backward without forward_train");
        let (n, f) = x.dim();
        let (m, _) = self.weight.dim();
        assert_eq!(dy.dim(), (n, m));

        // dW (M, F) += dY^T (M, N) . x (N, F)
        gemm(
            m,
            n,
            f,
            1.0,
            Mat::transposed(dy.as_slice().expect("standard layout"), m),
            Mat::row_major(x.as_slice().expect("standard layout"), f),
            1.0,
            self.grad_weight.as_slice_mut().expect("standard layout"),
        );
        for row in dy.rows() {
            for (gb, d) in self.grad_bias.iter_mut().zip(row.iter()) {
                *gb += d;
            }
        }
        // dX (N, F) = dY (N, M) . W (M, F)
        let mut dx = vec![0.0f32; n * f];
        gemm(
            n,
            m,
            f,
            1.0,
            Mat::row_major(dy.as_slice().expect("standard layout"), m),
            Mat::row_major(self.weight.as_slice().expect("standard layout"), f),
            0.0,
            &mut dx,
        );
        Array2::from_shape_vec((n, f), dx).expect("shape")
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
        let shape = vec![self.bias.len()];
        f(
            &format!("{prefix}.bias"),
            TensorRef {
                data: self.bias.as_slice_mut().unwrap(),
                grad: Some(self.grad_bias.as_slice_mut().unwrap()),
                shape: &shape,
            },
        );
    }
}
