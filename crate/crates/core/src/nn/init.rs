//! Seeded parameter initialization. All draws come from one ChaCha8 stream
//! consumed in registry order, so a seed fully determines every weight.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::Conv2d;
use super::linear::Linear;
use crate::rng::uniform_range;

fn normal(rng: &mut ChaCha8Rng, std: f64, out: &mut [f32]) {
    let dist = Normal::new(0.0f64, std).expect("std positive");
    for v in out {
        *v = dist.sample(rng) as f32;
    }
}

/// He initialization (normal, fan-out) for convolutions feeding ReLUs.
pub fn conv_he_normal_fan_out(conv: &mut Conv2d, rng: &mut ChaCha8Rng) {
    let (out_ch, _, kh, kw) = conv.weight.dim();
    let fan_out = (out_ch * kh * kw) as f64;
    let std = (2.0 / fan_out).sqrt();
    normal(rng, std, conv.weight.as_slice_mut().unwrap());
    if let Some(b) = conv.bias.as_mut() {
        b.fill(0.0);
    }
}

/// He initialization (uniform, fan-in), the usual default for conv stacks
/// without batch norm. Biases start at zero.
pub fn conv_he_uniform_fan_in(conv: &mut Conv2d, rng: &mut ChaCha8Rng) {
    let (_, in_ch, kh, kw) = conv.weight.dim();
    let fan_in = (in_ch * kh * kw) as f64;
    let bound = (6.0 / fan_in).sqrt();
    for v in conv.weight.as_slice_mut().unwrap() {
        *v = uniform_range(rng, -bound, bound) as f32;
    }
    if let Some(b) = conv.bias.as_mut() {
        b.fill(0.0);
    }
}

/// Small-variance normal init for a freshly attached classifier conv head.
pub fn conv_head_normal(conv: &mut Conv2d, rng: &mut ChaCha8Rng) {
    normal(rng, 0.01, conv.weight.as_slice_mut().unwrap());
    if let Some(b) = conv.bias.as_mut() {
        b.fill(0.0);
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for linear weight and bias.
pub fn linear_uniform(linear: &mut Linear, rng: &mut ChaCha8Rng) {
    let fan_in = linear.weight.dim().1 as f64;
    let bound = 1.0 / fan_in.sqrt();
    for v in linear.weight.as_slice_mut().unwrap() {
        *v = uniform_range(rng, -bound, bound) as f32;
    }
    for v in linear.bias.as_slice_mut().unwrap() {
        *v = uniform_range(rng, -bound, bound) as f32;
    }
}
