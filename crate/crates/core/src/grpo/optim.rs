use serde::{Deserialize, Serialize};

use crate::grpo::config::OptimizerKind;

/// Optimizer state carried across steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub steps: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Momentum { .. } => (num_params, 0),
            OptimizerKind::Adam { .. } => (num_params, num_params),
        };
        Optimizer {
            kind,
            learning_rate,
            steps: 0,
            first_moment: vec![0.0; m],
            second_moment: vec![0.0; v],
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len(), "parameter/gradient length mismatch");
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Momentum { beta } => {
                for ((p, g), m) in params.iter_mut().zip(grad).zip(&mut self.first_moment) {
                    *m = beta * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(kind: OptimizerKind, lr: f64) -> f64 {
        // f(x) = (x - 3)^2
        let mut x = [0.0];
        let mut opt = Optimizer::new(kind, lr, 1);
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 3.0)];
            opt.step(&mut x, &g);
        }
        x[0]
    }

    #[test]
    fn all_rules_reach_the_minimum() {
        assert!((minimize(OptimizerKind::Sgd, 0.1) - 3.0).abs() < 1e-9);
        assert!((minimize(OptimizerKind::Momentum { beta: 0.9 }, 0.01) - 3.0).abs() < 1e-6);
        assert!((minimize(OptimizerKind::adam(), 0.05) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Momentum { beta: 0.9 }, OptimizerKind::adam()] {
            let mut x = [1.5, -2.0];
            let mut opt = Optimizer::new(kind, 0.1, 2);
            opt.step(&mut x, &[0.0, 0.0]);
            assert_eq!(x, [1.5, -2.0]);
        }
    }
}
