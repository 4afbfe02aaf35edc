//! Minimal CPU neural-network stack: conv/batchnorm/pool/linear layers with
//! hand-written backward passes, seeded initialization, and SGD/Adam.
//!
//! Everything is f32 on NCHW `ndarray` buffers. Convolutions lower to a
//! single batched im2col + sgemm per layer. All operations are deterministic:
//! parallel sections write disjoint output ranges and reductions run in a
//! fixed order, so identical inputs produce bit-identical outputs run to run.

pub mod batchnorm;
pub mod conv;
pub mod gemm;
pub mod init;
pub mod linear;
pub mod ops;
pub mod optim;
pub mod pool;

pub use batchnorm::BatchNorm2d;
pub use conv::Conv2d;
pub use linear::Linear;
pub use ops::{Dropout, ReluMask};
pub use optim::{Optimizer, OptimizerKind};
pub use pool::{global_avg_pool, global_avg_pool_backward, MaxPool2d};

/// Mutable view of one named tensor during parameter visitation.
/// Buffers (e.g. batch-norm running statistics) carry no gradient.
pub struct TensorRef<'t> {
    pub data: &'t mut [f32],
    pub grad: Option<&'t mut [f32]>,
    pub shape: &'t [usize],
}

/// Networks expose their tensors in a fixed order through this visitor;
/// optimizers, archives, and manifests all rely on that order being stable.
pub type VisitFn<'a> = &'a mut dyn FnMut(&str, TensorRef<'_>);

/// Output length of a conv/pool dimension, or None when the geometry is
/// degenerate. `ceil_mode` follows the usual convention: partial windows are
/// allowed but must start inside the (padded-left) input.
pub fn out_dim(input: usize, kernel: usize, stride: usize, pad: usize, ceil_mode: bool) -> Option<usize> {
    let numer = input as i64 + 2 * pad as i64 - kernel as i64;
    if numer < 0 && !ceil_mode {
        return None;
    }
    let mut out = if ceil_mode {
        (numer + stride as i64 - 1).div_euclid(stride as i64) + 1
    } else {
        numer.div_euclid(stride as i64) + 1
    };
    if ceil_mode && (out - 1) * stride as i64 >= input as i64 + pad as i64 {
        out -= 1;
    }
    if out >= 1 {
        Some(out as usize)
    } else {
        None
    }
}
