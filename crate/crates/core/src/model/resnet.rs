//! ResNet-18: 7x7 stem, four stages of two basic residual blocks
//! (64/128/256/512 channels), global average pooling, linear head.

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, init, BatchNorm2d, Conv2d, Linear, MaxPool2d,
    ReluMask, VisitFn,
};
use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

pub struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: ReluMask,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    downsample: Option<(Conv2d, BatchNorm2d)>,
    relu_out: ReluMask,
}

impl BasicBlock {
    fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut conv1 = Conv2d::new(in_ch, out_ch, 3, stride, 1, false);
        init::conv_he_normal_fan_out(&mut conv1, rng);
        let mut conv2 = Conv2d::new(out_ch, out_ch, 3, 1, 1, false);
        init::conv_he_normal_fan_out(&mut conv2, rng);
        let downsample = (stride != 1 || in_ch != out_ch).then(|| {
            let mut conv = Conv2d::new(in_ch, out_ch, 1, stride, 0, false);
            init::conv_he_normal_fan_out(&mut conv, rng);
            (conv, BatchNorm2d::new(out_ch))
        });
        BasicBlock {
            conv1,
            bn1: BatchNorm2d::new(out_ch),
            relu1: ReluMask::new(),
            conv2,
            bn2: BatchNorm2d::new(out_ch),
            downsample,
            relu_out: ReluMask::new(),
        }
    }

    fn forward_train(&mut self, x: Array4<f32>) -> Array4<f32> {
        let identity = x.clone();
        let out = self.conv1.forward_train(x);
        let out = self.bn1.forward_train(out);
        let out = self.relu1.forward_train(out);
        let out = self.conv2.forward_train(out);
        let out = self.bn2.forward_train(out);
        let shortcut = match self.downsample.as_mut() {
            Some((conv, bn)) => bn.forward_train(conv.forward_train(identity)),
            None => identity,
        };
        self.relu_out.forward_train(out + shortcut)
    }

    fn forward_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        let mut out = self.conv1.forward_eval(x);
        out = self.bn1.forward_eval(&out);
        ReluMask::forward_eval(&mut out);
        out = self.conv2.forward_eval(&out);
        out = self.bn2.forward_eval(&out);
        match &self.downsample {
            Some((conv, bn)) => out += &bn.forward_eval(&conv.forward_eval(x)),
            None => out += x,
        }
        ReluMask::forward_eval(&mut out);
        out
    }

    fn backward(&mut self, dy: Array4<f32>) -> Array4<f32> {
        let dsum = self.relu_out.backward(dy);
        let d = self.bn2.backward(&dsum);
        let d = self.conv2.backward(&d);
        let d = self.relu1.backward(d);
        let d = self.bn1.backward(&d);
        let dx_main = self.conv1.backward(&d);
        let dx_short = match self.downsample.as_mut() {
            Some((conv, bn)) => {
                let d = bn.backward(&dsum);
                conv.backward(&d)
            }
            None => dsum,
        };
        dx_main + dx_short
    }

    fn visit(&mut self, prefix: &str, f: VisitFn<'_>) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.bn1.visit(&format!("{prefix}.bn1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.bn2.visit(&format!("{prefix}.bn2"), f);
        if let Some((conv, bn)) = self.downsample.as_mut() {
            conv.visit(&format!("{prefix}.downsample.0"), f);
            bn.visit(&format!("{prefix}.downsample.1"), f);
        }
    }
}

pub struct ResNet18Net {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: ReluMask,
    maxpool: MaxPool2d,
    blocks: Vec<BasicBlock>,
    fc: Linear,
    gap_dims: Option<(usize, usize)>,
}

impl ResNet18Net {
    pub fn new(num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut conv1 = Conv2d::new(3, 64, 7, 2, 3, false);
        init::conv_he_normal_fan_out(&mut conv1, rng);
        let plan: [(usize, usize, usize); 8] = [
            (64, 64, 1),
            (64, 64, 1),
            (64, 128, 2),
            (128, 128, 1),
            (128, 256, 2),
            (256, 256, 1),
            (256, 512, 2),
            (512, 512, 1),
        ];
        let blocks =
            plan.iter().map(|&(i, o, s)| BasicBlock::new(i, o, s, rng)).collect();
        let mut fc = Linear::new(512, num_classes);
        init::linear_uniform(&mut fc, rng);
        ResNet18Net {
            conv1,
            bn1: BatchNorm2d::new(64),
            relu1: ReluMask::new(),
            maxpool: MaxPool2d::new(3, 2, 1, false),
            blocks,
            fc,
            gap_dims: None,
        }
    }

    pub fn forward_train(&mut self, x: Array4<f32>) -> Array2<f32> {
        let x = self.conv1.forward_train(x);
        let x = self.bn1.forward_train(x);
        let x = self.relu1.forward_train(x);
        let mut x = self.maxpool.forward_train(x);
        for block in self.blocks.iter_mut() {
            x = block.forward_train(x);
        }
        let (_, _, h, w) = x.dim();
        self.gap_dims = Some((h, w));
        let pooled = global_avg_pool(&x);
        self.fc.forward_train(pooled)
    }

    pub fn forward_eval(&self, x: &Array4<f32>) -> Array2<f32> {
        let mut x = self.conv1.forward_eval(x);
        x = self.bn1.forward_eval(&x);
        ReluMask::forward_eval(&mut x);
        x = self.maxpool.forward_eval(&x);
        for block in &self.blocks {
            x = block.forward_eval(&x);
        }
        let pooled = global_avg_pool(&x);
        self.fc.forward_eval(&pooled)
    }

    pub fn backward(&mut self, dlogits: &Array2<f32>) {
        let dpool = self.fc.backward(dlogits);
        let dims = self.gap_dims.take().expect("backward without forward_train");
        let mut dx = global_avg_pool_backward(&dpool, dims);
        for block in self.blocks.iter_mut().rev() {
            dx = block.backward(dx);
        }
        let dx = self.maxpool.backward(&dx);
        let dx = self.relu1.backward(dx);
        let dx = self.bn1.backward(&dx);
        let _ = self.conv1.backward(&dx);
    }

    pub fn visit(&mut self, f: VisitFn<'_>) {
        self.conv1.visit("conv1", f);
        self.bn1.visit("bn1", f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&format!("layer{}.{}", i / 2 + 1, i % 2), f);
        }
        self.fc.visit("fc", f);
    }

    /// Strided stem and blocks tolerate any positive spatial size.
    pub fn spatial_ok(&self, h: usize, w: usize) -> bool {
        h >= 1 && w >= 1
    }
}
