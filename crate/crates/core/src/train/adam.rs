use crate::model::{CasiiParams, Gradients};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with decoupled weight decay on weight blocks (biases are not
/// decayed). Decay is applied as `p -= lr * wd * p` before the moment update.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    first: CasiiParams,
    second: CasiiParams,
    step: u64,
}

impl Adam {
    pub fn new(like: &CasiiParams, learning_rate: f64, weight_decay: f64) -> Self {
        Adam {
            learning_rate,
            weight_decay,
            first: like.zeros_like(),
            second: like.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut CasiiParams, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        let lr = self.learning_rate;
        let decay = lr * self.weight_decay;

        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.first.blocks_mut())
            .zip(self.second.blocks_mut())
            .enumerate();
        for (b, (((p, g), m), v)) in blocks {
            let decays = decay != 0.0 && CasiiParams::is_weight_block(b);
            for i in 0..p.len() {
                if decays {
                    p[i] -= decay * p[i];
                }
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}
