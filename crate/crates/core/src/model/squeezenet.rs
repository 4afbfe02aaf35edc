//! SqueezeNet: stem conv, eight fire modules (squeeze 1x1, expand 1x1 + 3x3),
//! dropout, 1x1 classifier conv, global average pooling. Supports the v1.1
//! layout (default) and the original v1.0.

use super::SqueezeNetVersion;
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, init, out_dim, Conv2d, Dropout, MaxPool2d,
    ReluMask, VisitFn,
};
use ndarray::{s, Array2, Array4};
use rand_chacha::ChaCha8Rng;

/// Concatenate along the channel axis into a standard-layout array.
fn concat_channels(a: Array4<f32>, b: Array4<f32>) -> Array4<f32> {
    let (n, ca, h, w) = a.dim();
    let (nb, cb, hb, wb) = b.dim();
    assert_eq!((n, h, w), (nb, hb, wb), "concat spatial/batch mismatch");
    let plane = h * w;
    let mut out = Array4::zeros((n, ca + cb, h, w));
    {
        let o = out.as_slice_mut().unwrap();
        let av = a.as_slice().unwrap();
        let bv = b.as_slice().unwrap();
        for ni in 0..n {
            let dst = &mut o[ni * (ca + cb) * plane..][..(ca + cb) * plane];
            dst[..ca * plane].copy_from_slice(&av[ni * ca * plane..][..ca * plane]);
            dst[ca * plane..].copy_from_slice(&bv[ni * cb * plane..][..cb * plane]);
        }
    }
    out
}

struct Fire {
    squeeze: Conv2d,
    s_relu: ReluMask,
    expand1: Conv2d,
    e1_relu: ReluMask,
    expand3: Conv2d,
    e3_relu: ReluMask,
}

impl Fire {
    fn new(in_ch: usize, squeeze_ch: usize, expand_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut squeeze = Conv2d::new(in_ch, squeeze_ch, 1, 1, 0, true);
        init::conv_he_uniform_fan_in(&mut squeeze, rng);
        let mut expand1 = Conv2d::new(squeeze_ch, expand_ch, 1, 1, 0, true);
        init::conv_he_uniform_fan_in(&mut expand1, rng);
        let mut expand3 = Conv2d::new(squeeze_ch, expand_ch, 3, 1, 1, true);
        init::conv_he_uniform_fan_in(&mut expand3, rng);
        Fire {
            squeeze,
            s_relu: ReluMask::new(),
            expand1,
            e1_relu: ReluMask::new(),
            expand3,
            e3_relu: ReluMask::new(),
        }
    }

    fn forward_train(&mut self, x: Array4<f32>) -> Array4<f32> {
        let s = self.s_relu.forward_train(self.squeeze.forward_train(x));
        let y1 = self.e1_relu.forward_train(self.expand1.forward_train(s.clone()));
        let y3 = self.e3_relu.forward_train(self.expand3.forward_train(s));
        concat_channels(y1, y3)
    }

    fn forward_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        let mut s = self.squeeze.forward_eval(x);
        ReluMask::forward_eval(&mut s);
        let mut y1 = self.expand1.forward_eval(&s);
        ReluMask::forward_eval(&mut y1);
        let mut y3 = self.expand3.forward_eval(&s);
        ReluMask::forward_eval(&mut y3);
        concat_channels(y1, y3)
    }

    fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let c1 = self.expand1.out_channels();
        let dy1 = dy.slice(s![.., ..c1, .., ..]).to_owned();
        let dy3 = dy.slice(s![.., c1.., .., ..]).to_owned();
        let d1 = self.e1_relu.backward(dy1);
        let d1 = self.expand1.backward(&d1);
        let d3 = self.e3_relu.backward(dy3);
        let d3 = self.expand3.backward(&d3);
        let ds = self.s_relu.backward(d1 + d3);
        self.squeeze.backward(&ds)
    }

    fn visit(&mut self, prefix: &str, f: VisitFn<'_>) {
        self.squeeze.visit(&format!("{prefix}.squeeze"), f);
        self.expand1.visit(&format!("{prefix}.expand1x1"), f);
        self.expand3.visit(&format!("{prefix}.expand3x3"), f);
    }
}

struct VersionSpec {
    stem_channels: usize,
    stem_kernel: usize,
    /// (in, squeeze, expand) per fire module
    fires: [(usize, usize, usize); 8],
    /// fire array indices after which a max pool runs
    pool_after: [usize; 2],
    /// torchvision-style feature indices used in parameter names
    feature_indices: [usize; 8],
}

fn version_spec(version: SqueezeNetVersion) -> VersionSpec {
    match version {
        SqueezeNetVersion::V1_1 => VersionSpec {
            stem_channels: 64,
            stem_kernel: 3,
            fires: [
                (64, 16, 64),
                (128, 16, 64),
                (128, 32, 128),
                (256, 32, 128),
                (256, 48, 192),
                (384, 48, 192),
                (384, 64, 256),
                (512, 64, 256),
            ],
            pool_after: [1, 3],
            feature_indices: [3, 4, 6, 7, 9, 10, 11, 12],
        },
        SqueezeNetVersion::V1_0 => VersionSpec {
            stem_channels: 96,
            stem_kernel: 7,
            fires: [
                (96, 16, 64),
                (128, 16, 64),
                (128, 32, 128),
                (256, 32, 128),
                (256, 48, 192),
                (384, 48, 192),
                (384, 64, 256),
                (512, 64, 256),
            ],
            pool_after: [2, 6],
            feature_indices: [3, 4, 5, 7, 8, 9, 10, 12],
        },
    }
}

pub struct SqueezeNetNet {
    version: SqueezeNetVersion,
    conv1: Conv2d,
    relu1: ReluMask,
    stem_pool: MaxPool2d,
    fires: Vec<Fire>,
    mid_pools: [MaxPool2d; 2],
    dropout: Dropout,
    classifier: Conv2d,
    relu_cls: ReluMask,
    gap_dims: Option<(usize, usize)>,
    pool_after: [usize; 2],
    feature_indices: [usize; 8],
}

impl SqueezeNetNet {
    pub fn new(version: SqueezeNetVersion, num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let spec = version_spec(version);
        let mut conv1 = Conv2d::new(3, spec.stem_channels, spec.stem_kernel, 2, 0, true);
        init::conv_he_uniform_fan_in(&mut conv1, rng);
        let fires: Vec<Fire> =
            spec.fires.iter().map(|&(i, s, e)| Fire::new(i, s, e, rng)).collect();
        let mut classifier = Conv2d::new(512, num_classes, 1, 1, 0, true);
        init::conv_head_normal(&mut classifier, rng);
        SqueezeNetNet {
            version,
            conv1,
            relu1: ReluMask::new(),
            stem_pool: MaxPool2d::new(3, 2, 0, true),
            fires,
            mid_pools: [MaxPool2d::new(3, 2, 0, true), MaxPool2d::new(3, 2, 0, true)],
            dropout: Dropout::new(0.5, crate::rng::seed_rng(0, "dropout", 0)),
            classifier,
            relu_cls: ReluMask::new(),
            gap_dims: None,
            pool_after: spec.pool_after,
            feature_indices: spec.feature_indices,
        }
    }

    pub fn reseed_dropout(&mut self, rng: ChaCha8Rng) {
        self.dropout.reseed(rng);
    }

    pub fn forward_train(&mut self, x: Array4<f32>) -> Array2<f32> {
        let x = self.conv1.forward_train(x);
        let x = self.relu1.forward_train(x);
        let mut x = self.stem_pool.forward_train(x);
        for i in 0..self.fires.len() {
            x = self.fires[i].forward_train(x);
            if let Some(p) = self.pool_after.iter().position(|&a| a == i) {
                x = self.mid_pools[p].forward_train(x);
            }
        }
        let x = self.dropout.forward_train(x);
        let x = self.classifier.forward_train(x);
        let x = self.relu_cls.forward_train(x);
        let (_, _, h, w) = x.dim();
        self.gap_dims = Some((h, w));
        global_avg_pool(&x)
    }

    pub fn forward_eval(&self, x: &Array4<f32>) -> Array2<f32> {
        let mut x = self.conv1.forward_eval(x);
        ReluMask::forward_eval(&mut x);
        x = self.stem_pool.forward_eval(&x);
        for i in 0..self.fires.len() {
            x = self.fires[i].forward_eval(&x);
            if let Some(p) = self.pool_after.iter().position(|&a| a == i) {
                x = self.mid_pools[p].forward_eval(&x);
            }
        }
        x = self.classifier.forward_eval(&x);
        ReluMask::forward_eval(&mut x);
        global_avg_pool(&x)
    }

    pub fn backward(&mut self, dlogits: &Array2<f32>) {
        let dims = self.gap_dims.take().expect("backward without forward_train");
        let dx = global_avg_pool_backward(dlogits, dims);
        let dx = self.relu_cls.backward(dx);
        let dx = self.classifier.backward(&dx);
        let mut dx = self.dropout.backward(dx);
        for i in (0..self.fires.len()).rev() {
            if let Some(p) = self.pool_after.iter().position(|&a| a == i) {
                dx = self.mid_pools[p].backward(&dx);
            }
            dx = self.fires[i].backward(&dx);
        }
        let dx = self.stem_pool.backward(&dx);
        let dx = self.relu1.backward(dx);
        let _ = self.conv1.backward(&dx);
    }

    pub fn visit(&mut self, f: VisitFn<'_>) {
        self.conv1.visit("features.0", f);
        let indices = self.feature_indices;
        for (fire, idx) in self.fires.iter_mut().zip(indices) {
            fire.visit(&format!("features.{idx}"), f);
        }
        self.classifier.visit("classifier.1", f);
    }

    /// The unpadded stem and ceil-mode pools need a minimum spatial extent.
    pub fn spatial_ok(&self, h: usize, w: usize) -> bool {
        let spec = version_spec(self.version);
        let chain = |mut v: usize| -> Option<usize> {
            v = out_dim(v, spec.stem_kernel, 2, 0, false)?;
            v = out_dim(v, 3, 2, 0, true)?; // stem pool
            v = out_dim(v, 3, 2, 0, true)?; // mid pool 1
            v = out_dim(v, 3, 2, 0, true)?; // mid pool 2
            Some(v)
        };
        chain(h).is_some() && chain(w).is_some()
    }
}
