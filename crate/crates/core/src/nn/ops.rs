//! Activation and regularization pieces: ReLU with a cached mask, and
//! inverted dropout driven by an explicit reseedable stream.

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;

/// ReLU that remembers which outputs were positive. The mask costs one byte
/// per element instead of caching a full activation copy.
#[derive(Default)]
pub struct ReluMask {
    mask: Option<Vec<u8>>,
}

impl ReluMask {
    pub fn new() -> Self {
        ReluMask { mask: None }
    }

    pub fn forward_train(&mut self, mut x: Array4<f32>) -> Array4<f32> {
        let mut mask = vec![0u8; x.len()];
        for (v, m) in x.iter_mut().zip(mask.iter_mut()) {
            if *v > 0.0 {
                *m = 1;
            } else {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        x
    }

    pub fn forward_eval(x: &mut Array4<f32>) {
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn backward(&mut self, mut dy: Array4<f32>) -> Array4<f32> {
        let mask = self.mask.take().expect("backward without forward_train");
        assert_eq!(mask.len(), dy.len());
        for (d, m) in dy.iter_mut().zip(mask.iter()) {
            if *m == 0 {
                *d = 0.0;
            }
        }
        dy
    }
}

/// Inverted dropout: in training, elements survive with probability
/// `1 - p` and are scaled by `1/(1-p)`; inference is the identity.
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(p: f64, rng: ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&p));
        Dropout { p, rng, mask: None }
    }

    /// Reset the stream; training runs call this so identical seeds replay
    /// identical masks regardless of prior history.
    pub fn reseed(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn forward_train(&mut self, mut x: Array4<f32>) -> Array4<f32> {
        let keep = 1.0 - self.p;
        let scale = (1.0 / keep) as f32;
        let mut mask = vec![0.0f32; x.len()];
        for m in mask.iter_mut() {
            if crate::rng::uniform_f64(&mut self.rng) < keep {
                *m = scale;
            }
        }
        for (v, m) in x.iter_mut().zip(mask.iter()) {
            *v *= m;
        }
        self.mask = Some(mask);
        x
    }

    pub fn backward(&mut self, mut dy: Array4<f32>) -> Array4<f32> {
        let mask = self.mask.take().expect("backward without forward_train");
        for (d, m) in dy.iter_mut().zip(mask.iter()) {
            *d *= m;
        }
        dy
    }
}
