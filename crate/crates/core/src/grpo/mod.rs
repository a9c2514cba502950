//! Group Relative Policy Optimization over any [`DifferentiablePolicy`].
//!
//! Each step samples `group_size` completions per prompt, scores them, turns
//! the scores into group-standardized advantages and takes one clipped
//! surrogate step with a KL penalty against a frozen reference policy.
//! No value model is involved.

mod checkpoint;
mod config;
mod objective;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, NamedTensor, RngState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{GrpoConfig, OptimizerKind};
pub use objective::{
    compute_advantages, grpo_loss, grpo_loss_with_grad, kl_penalty_grad, kl_penalty_per_token,
    CandidateGroup, LossWithGrad,
};
pub use optim::Optimizer;
pub use trainer::{
    build_group, group_loss_gradient, train_loop, train_step, EpochMetrics, GrpoTrainer, RewardFn,
    StepReport, TrainOutcome, TrainingPrompt,
};

use crate::error::Result;

pub type TokenId = usize;

/// A sampled completion with log-probabilities at the sampling temperature
/// and at temperature 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub tokens: Vec<TokenId>,
    pub sample_logprobs: Vec<f64>,
    pub logprobs: Vec<f64>,
}

/// An autoregressive token policy whose parameters are exposed as one flat
/// vector, so that trainers and gradient checks stay architecture-agnostic.
pub trait DifferentiablePolicy: Clone + Send + Sync {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Per-token `log p(completion[t] | prompt, completion[..t])` at temperature 1.
    fn token_logprobs(&self, prompt: &[TokenId], completion: &[TokenId]) -> Result<Vec<f64>>;

    /// Adds the gradient of `Σ_t upstream[t] · logprob_t` to `grad`.
    fn accumulate_logprob_grad(
        &self,
        prompt: &[TokenId],
        completion: &[TokenId],
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<()>;

    /// Samples until end-of-sequence or `max_len` tokens. Deterministic in `seed`.
    fn sample(&self, prompt: &[TokenId], temperature: f64, max_len: usize, seed: u64) -> Result<Rollout>;

    /// Parameter tensors for checkpointing.
    fn named_tensors(&self) -> Vec<NamedTensor>;

    /// Architecture description stored next to the tensors.
    fn metadata(&self) -> serde_json::Value;
}
