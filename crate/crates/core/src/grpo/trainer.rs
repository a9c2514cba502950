use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Verdict;
use crate::error::{Error, Result};
use crate::grpo::checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::grpo::config::GrpoConfig;
use crate::grpo::objective::{compute_advantages, grpo_loss_with_grad, CandidateGroup};
use crate::grpo::optim::Optimizer;
use crate::grpo::{DifferentiablePolicy, TokenId};
use crate::rewards::RewardBreakdown;

/// A tokenized prompt with the verdict its completions are scored against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPrompt {
    pub id: String,
    pub tokens: Vec<TokenId>,
    pub gold: Verdict,
}

pub type RewardFn<'a> = dyn Fn(&TrainingPrompt, &[TokenId]) -> RewardBreakdown + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub mean_reward: f64,
    pub mean_format_reward: f64,
    pub mean_accuracy_reward: f64,
    pub mean_abs_advantage: f64,
    pub mean_completion_len: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub mean_format_reward: f64,
    pub mean_accuracy_reward: f64,
    pub mean_loss: f64,
}

/// Samples one group for `prompt`, one seed per candidate, and scores it.
pub fn build_group<P: DifferentiablePolicy>(
    policy: &P,
    reference: &P,
    prompt: &TrainingPrompt,
    reward_fn: &RewardFn,
    cfg: &GrpoConfig,
    seeds: &[u64],
) -> Result<(CandidateGroup, Vec<RewardBreakdown>)> {
    let wrap = |e: Error| Error::Rollout {
        prompt_id: prompt.id.clone(),
        message: e.to_string(),
    };
    let mut completions = Vec::with_capacity(seeds.len());
    let mut old_logprobs = Vec::with_capacity(seeds.len());
    let mut ref_logprobs = Vec::with_capacity(seeds.len());
    let mut breakdowns = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let rollout = policy
            .sample(&prompt.tokens, cfg.temperature, cfg.max_completion_tokens, seed)
            .map_err(wrap)?;
        if rollout.tokens.len() > cfg.max_completion_tokens {
            return Err(wrap(Error::invalid("policy exceeded max_completion_tokens")));
        }
        // Recomputed through the same path the loss uses, so ratios start at exactly 1.
        old_logprobs.push(policy.token_logprobs(&prompt.tokens, &rollout.tokens).map_err(wrap)?);
        ref_logprobs.push(reference.token_logprobs(&prompt.tokens, &rollout.tokens).map_err(wrap)?);
        breakdowns.push(reward_fn(prompt, &rollout.tokens));
        completions.push(rollout.tokens);
    }
    let rewards: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let advantages = compute_advantages(&rewards).map_err(wrap)?;
    let group = CandidateGroup {
        prompt_id: prompt.id.clone(),
        completions,
        rewards,
        old_logprobs,
        ref_logprobs,
        advantages,
    };
    Ok((group, breakdowns))
}

/// Evaluates the loss of `group` under `policy` and adds `scale · ∇loss` to `grad`.
pub fn group_loss_gradient<P: DifferentiablePolicy>(
    policy: &P,
    prompt_tokens: &[TokenId],
    group: &CandidateGroup,
    cfg: &GrpoConfig,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let new_logprobs = group
        .completions
        .iter()
        .map(|c| policy.token_logprobs(prompt_tokens, c))
        .collect::<Result<Vec<_>>>()?;
    let out = grpo_loss_with_grad(group, &new_logprobs, cfg)?;
    for (completion, token_grads) in group.completions.iter().zip(&out.token_grads) {
        let upstream: Vec<f64> = token_grads.iter().map(|g| g * scale).collect();
        policy.accumulate_logprob_grad(prompt_tokens, completion, &upstream, grad)?;
    }
    Ok(out.loss)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One GRPO optimizer step over `batch`.
///
/// The batch is split into `grad_accum_steps` micro-batches; each micro-batch
/// loss is the mean over its groups and the applied gradient is the mean over
/// micro-batches. Rollout seeds are drawn from `rng` before any sampling, so
/// results do not depend on thread scheduling.
pub fn train_step<P: DifferentiablePolicy>(
    policy: &mut P,
    reference: &P,
    batch: &[TrainingPrompt],
    reward_fn: &RewardFn,
    cfg: &GrpoConfig,
    optimizer: &mut Optimizer,
    rng: &mut ChaCha8Rng,
) -> Result<StepReport> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let seeds: Vec<Vec<u64>> = batch
        .iter()
        .map(|_| (0..cfg.group_size).map(|_| rng.next_u64()).collect())
        .collect();

    let sampled: Vec<(CandidateGroup, Vec<RewardBreakdown>)> = {
        let policy = &*policy;
        batch
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(prompt, s)| build_group(policy, reference, prompt, reward_fn, cfg, s))
            .collect::<Result<_>>()?
    };

    let breakdowns = sampled.iter().flat_map(|(_, b)| b.iter());
    let mean_reward = mean(breakdowns.clone().map(|b| b.total));
    let mean_format_reward = mean(breakdowns.clone().map(|b| b.format_reward));
    let mean_accuracy_reward = mean(breakdowns.map(|b| b.accuracy_reward));
    let mean_abs_advantage = mean(sampled.iter().flat_map(|(g, _)| g.advantages.iter().map(|a| a.abs())));
    let mean_completion_len = mean(
        sampled
            .iter()
            .flat_map(|(g, _)| g.completions.iter().map(|c| c.len() as f64)),
    );

    let chunk = batch.len().div_ceil(cfg.grad_accum_steps);
    let micro_batches = batch.len().div_ceil(chunk);
    let n = policy.num_params();
    let mut first_loss = 0.0;
    let mut first_norm = 0.0;
    for inner in 0..cfg.inner_epochs {
        let mut grad = vec![0.0; n];
        let mut loss = 0.0;
        for (prompts, groups) in batch.chunks(chunk).zip(sampled.chunks(chunk)) {
            let scale = 1.0 / (groups.len() * micro_batches) as f64;
            let policy = &*policy;
            let parts: Vec<(f64, Vec<f64>)> = prompts
                .par_iter()
                .zip(groups.par_iter())
                .map(|(prompt, (group, _))| {
                    let mut g = vec![0.0; n];
                    group_loss_gradient(policy, &prompt.tokens, group, cfg, scale, &mut g)
                        .map(|l| (l * scale, g))
                        .map_err(|e| Error::Rollout {
                            prompt_id: prompt.id.clone(),
                            message: e.to_string(),
                        })
                })
                .collect::<Result<_>>()?;
            for (l, g) in parts {
                loss += l;
                for (acc, x) in grad.iter_mut().zip(&g) {
                    *acc += x;
                }
            }
        }
        if inner == 0 {
            first_loss = loss;
            first_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { layer: "gradient" });
        }
        optimizer.step(policy.params_mut(), &grad);
    }

    Ok(StepReport {
        step: optimizer.steps,
        mean_reward,
        mean_format_reward,
        mean_accuracy_reward,
        mean_abs_advantage,
        mean_completion_len,
        loss: first_loss,
        grad_norm: first_norm,
    })
}

/// Owns the frozen reference policy, optimizer state and PRNG for a run.
#[derive(Debug, Clone)]
pub struct GrpoTrainer<P> {
    pub cfg: GrpoConfig,
    reference: P,
    optimizer: Optimizer,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<P: DifferentiablePolicy> GrpoTrainer<P> {
    /// Snapshots `policy` as the reference.
    pub fn new(policy: &P, cfg: GrpoConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(GrpoTrainer {
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate, policy.num_params()),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            reference: policy.clone(),
            epoch: 0,
            cfg,
        })
    }

    pub fn reference(&self) -> &P {
        &self.reference
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.steps
    }

    pub fn train_step(&mut self, policy: &mut P, batch: &[TrainingPrompt], reward_fn: &RewardFn) -> Result<StepReport> {
        train_step(
            policy,
            &self.reference,
            batch,
            reward_fn,
            &self.cfg,
            &mut self.optimizer,
            &mut self.rng,
        )
    }

    /// Runs one pass over `prompts` in a freshly shuffled order.
    pub fn train_epoch(
        &mut self,
        policy: &mut P,
        prompts: &[TrainingPrompt],
        reward_fn: &RewardFn,
    ) -> Result<(EpochMetrics, Vec<StepReport>)> {
        let mut order: Vec<usize> = (0..prompts.len()).collect();
        order.shuffle(&mut self.rng);
        let mut reports = Vec::new();
        for idx in order.chunks(self.cfg.batch_size) {
            let batch: Vec<TrainingPrompt> = idx.iter().map(|&i| prompts[i].clone()).collect();
            reports.push(self.train_step(policy, &batch, reward_fn)?);
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            steps: reports.len(),
            mean_reward: mean(reports.iter().map(|r| r.mean_reward)),
            mean_format_reward: mean(reports.iter().map(|r| r.mean_format_reward)),
            mean_accuracy_reward: mean(reports.iter().map(|r| r.mean_accuracy_reward)),
            mean_loss: mean(reports.iter().map(|r| r.loss)),
        };
        self.epoch += 1;
        Ok((metrics, reports))
    }

    pub fn checkpoint(&self, policy: &P) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            epoch: self.epoch,
            step: self.optimizer.steps,
            config: self.cfg.clone(),
            policy: policy.metadata(),
            tensors: policy.named_tensors(),
            rng: RngState::capture(&self.rng),
            optimizer: Some(self.optimizer.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub policy: P,
    pub epochs: Vec<EpochMetrics>,
    pub steps: Vec<StepReport>,
    pub final_checkpoint: Checkpoint,
}

/// Trains for `cfg.epochs` epochs with the reference frozen at the initial
/// policy. `on_epoch` receives the checkpoint written after every epoch.
pub fn train_loop<P: DifferentiablePolicy>(
    mut policy: P,
    prompts: &[TrainingPrompt],
    reward_fn: &RewardFn,
    cfg: &GrpoConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome<P>> {
    let mut trainer = GrpoTrainer::new(&policy, cfg.clone())?;
    if cfg.epochs > 0 && prompts.is_empty() {
        return Err(Error::invalid("no training prompts"));
    }
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut steps = Vec::new();
    for _ in 0..cfg.epochs {
        let (metrics, reports) = trainer.train_epoch(&mut policy, prompts, reward_fn)?;
        tracing::info!(
            epoch = metrics.epoch,
            mean_reward = metrics.mean_reward,
            mean_format_reward = metrics.mean_format_reward,
            "epoch finished"
        );
        on_epoch(&metrics, &trainer.checkpoint(&policy))?;
        epochs.push(metrics);
        steps.extend(reports);
    }
    let final_checkpoint = trainer.checkpoint(&policy);
    Ok(TrainOutcome {
        policy,
        epochs,
        steps,
        final_checkpoint,
    })
}
