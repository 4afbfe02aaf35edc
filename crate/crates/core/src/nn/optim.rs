//! SGD with momentum and Adam. Weight decay is applied as an L2 term added
//! to the gradient. Per-parameter state is keyed by visitation order, which
//! networks keep stable.

use super::TensorRef;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f32 },
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl OptimizerKind {
    pub fn sgd_momentum() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct ParamState {
    m: Vec<f32>,
    v: Vec<f32>,
}

pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
    pub weight_decay: f32,
    step_count: u64,
    state: Vec<ParamState>,
    cursor: usize,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f32, weight_decay: f32) -> Self {
        Optimizer { kind, learning_rate, weight_decay, step_count: 0, state: Vec::new(), cursor: 0 }
    }

    /// Begin one optimization step; call `apply` for every parameter in a
    /// stable order afterwards.
    pub fn begin_step(&mut self) {
        self.step_count += 1;
        self.cursor = 0;
    }

    /// Update a single parameter tensor in place. Tensors without gradients
    /// (buffers) are ignored.
    pub fn apply(&mut self, t: &mut TensorRef<'_>) {
        let Some(grad) = t.grad.as_deref() else { return };
        let idx = self.cursor;
        self.cursor += 1;
        if self.state.len() <= idx {
            let needs_v = matches!(self.kind, OptimizerKind::Adam { .. });
            self.state.push(ParamState {
                m: vec![0.0; grad.len()],
                v: if needs_v { vec![0.0; grad.len()] } else { Vec::new() },
            });
        }
        let state = &mut self.state[idx];
        assert_eq!(state.m.len(), grad.len(), "parameter order changed between steps");
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((w, g), m) in t.data.iter_mut().zip(grad.iter()).zip(state.m.iter_mut()) {
                    let g = g + wd * *w;
                    *m = momentum * *m + g;
                    *w -= lr * *m;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.step_count as i32);
                let bc2 = 1.0 - beta2.powi(self.step_count as i32);
                for (((w, g), m), v) in t
                    .data
                    .iter_mut()
                    .zip(grad.iter())
                    .zip(state.m.iter_mut())
                    .zip(state.v.iter_mut())
                {
                    let g = g + wd * *w;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
