use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter update rule applied after gradient accumulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    #[default]
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Completions sampled per prompt.
    pub group_size: usize,
    pub clip_epsilon: f64,
    /// Weight of the per-token KL penalty against the reference policy.
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub temperature: f64,
    pub max_completion_tokens: usize,
    pub epochs: usize,
    /// Prompts per optimizer step.
    pub batch_size: usize,
    /// Micro-batches whose gradients are averaged before one update.
    pub grad_accum_steps: usize,
    /// Policy updates per sampling round; 1 means old == current at sampling time.
    pub inner_epochs: usize,
    /// Divide each completion's token sum by its length.
    pub length_normalize: bool,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            learning_rate: 5e-5,
            temperature: 0.6,
            max_completion_tokens: 2048,
            epochs: 20,
            batch_size: 8,
            grad_accum_steps: 2,
            inner_epochs: 1,
            length_normalize: true,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.group_size < 2 {
            return fail("group_size must be at least 2");
        }
        if !self.clip_epsilon.is_finite() || self.clip_epsilon <= 0.0 {
            return fail("clip_epsilon must be positive");
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return fail("temperature must be positive");
        }
        if !self.kl_beta.is_finite() || self.kl_beta < 0.0 || !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return fail("kl_beta and learning_rate must be finite and non-negative");
        }
        if self.max_completion_tokens == 0
            || self.batch_size == 0
            || self.grad_accum_steps == 0
            || self.inner_epochs == 0
        {
            return fail("max_completion_tokens, batch_size, grad_accum_steps and inner_epochs must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = GrpoConfig::default();
        assert_eq!(c.group_size, 8);
        assert_eq!(c.learning_rate, 5e-5);
        assert_eq!(c.temperature, 0.6);
        assert_eq!(c.max_completion_tokens, 2048);
        assert_eq!(c.epochs, 20);
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.grad_accum_steps, 2);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_singleton_groups() {
        let c = GrpoConfig {
            group_size: 1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c: GrpoConfig = toml::from_str("group_size = 4\n[optimizer]\nkind = \"adam\"\nbeta1 = 0.9\nbeta2 = 0.99\neps = 1e-8\n").unwrap();
        assert_eq!(c.group_size, 4);
        assert_eq!(c.kl_beta, 0.04);
        assert!(matches!(c.optimizer, OptimizerKind::Adam { .. }));
    }
}
