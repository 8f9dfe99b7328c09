use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Fine-tuning hyperparameters. Defaults: lr 1e-4, batch 4, 20 epochs,
/// linear decay to zero without warmup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Hold virtual label-word rows of `W_lm` at their prototype values.
    pub freeze_virtual: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 4,
            epochs: 20,
            weight_decay: 0.01,
            seed: 0,
            freeze_virtual: false,
        }
    }
}

/// Learning-rate multiplier after `step` completed steps out of `total`.
pub fn linear_decay(step: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (1.0 - step as f64 / total as f64).max(0.0)
}

/// AdamW with bias correction and decoupled weight decay:
/// `p ← p·(1 − lr·wd) − lr·m̂/(√v̂ + ε)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Moments are created lazily on the first call from the tensor shapes.
    pub fn update(&mut self, params: Vec<&mut Array2<f64>>, grads: Vec<&Array2<f64>>, lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer state built for another model");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let decay = 1.0 - lr * self.weight_decay;
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p = *p * decay - lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

/// Optimiser state for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub adam: AdamW,
    pub learning_rate: f64,
    /// Steps completed; the schedule multiplier is `linear_decay(step, total_steps)`.
    pub step: usize,
    pub total_steps: usize,
    /// `W_lm` rows excluded from updates, including weight decay.
    pub frozen_lm_rows: Vec<usize>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, weight_decay: f64, total_steps: usize) -> Self {
        OptimizerState {
            adam: AdamW::new(weight_decay),
            learning_rate,
            step: 0,
            total_steps,
            frozen_lm_rows: Vec::new(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.learning_rate * linear_decay(self.step, self.total_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(linear_decay(0, 10), 1.0);
        assert_eq!(linear_decay(5, 10), 0.5);
        assert_eq!(linear_decay(10, 10), 0.0);
        assert_eq!(linear_decay(12, 10), 0.0);
    }

    #[test]
    fn single_step_on_quadratic() {
        // f(x) = x², x = 1, g = 2, lr = 0.1, wd = 0.01.
        let mut x = array![[1.0]];
        let g = array![[2.0]];
        let mut opt = AdamW::new(0.01);
        opt.update(vec![&mut x], vec![&g], 0.1);
        // m̂ = 2, v̂ = 4 after bias correction.
        let expected = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 2.0 / (4f64.sqrt() + 1e-8);
        assert!((x[[0, 0]] - expected).abs() < 1e-15, "{} vs {expected}", x[[0, 0]]);
        assert!((x[[0, 0]] - 0.899).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut x = array![[2.0, -4.0]];
        let g = Array2::zeros((1, 2));
        let mut opt = AdamW::new(0.5);
        opt.update(vec![&mut x], vec![&g], 0.1);
        assert_eq!(x, array![[2.0 * 0.95, -4.0 * 0.95]]);
    }
}
