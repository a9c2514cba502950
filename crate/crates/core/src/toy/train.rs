//! Tuned GRPO settings and a streaming trainer for the synthetic task.
//!
//! Every optimizer step draws a fresh batch of episodes, so a run never
//! revisits a prompt. Step `s` of a run seeded `seed` uses episode seeds
//! `seed * 1_000_000 + s * batch_size ..`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grpo::{Checkpoint, EpochMetrics, GrpoConfig, GrpoTrainer, OptimizerKind, StepReport};
use crate::toy::model::{PolicyShape, ToyPolicy};
use crate::toy::task::{episode_prompts, toy_reward};
use crate::toy::vocab::Vocabulary;

/// Reference rate 5e-5 scaled by 1e5. The toy has about 3k parameters with
/// O(1) gradients, against billions with tiny per-weight gradients.
pub const TOY_LEARNING_RATE: f64 = 5.0;
pub const TOY_LR_SCALE: f64 = 1e5;
/// Stronger than the reference 0.04; it keeps both keyword classes alive
/// early in training.
pub const TOY_KL_BETA: f64 = 0.15;
pub const TOY_MAX_COMPLETION: usize = 8;

pub fn toy_grpo_config(seed: u64) -> GrpoConfig {
    GrpoConfig {
        learning_rate: TOY_LEARNING_RATE,
        kl_beta: TOY_KL_BETA,
        max_completion_tokens: TOY_MAX_COMPLETION,
        optimizer: OptimizerKind::Sgd,
        epochs: 40,
        seed,
        ..GrpoConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTrainConfig {
    /// Keys given here override [`toy_grpo_config`], not the generic defaults.
    #[serde(deserialize_with = "overlay_toy_defaults")]
    pub grpo: GrpoConfig,
    /// Fresh episodes per epoch; `episodes_per_epoch / batch_size` steps.
    pub episodes_per_epoch: usize,
    pub shape: PolicyShape,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        ToyTrainConfig {
            grpo: toy_grpo_config(0),
            episodes_per_epoch: 64,
            shape: PolicyShape::default(),
        }
    }
}

fn overlay_toy_defaults<'de, D: serde::Deserializer<'de>>(de: D) -> std::result::Result<GrpoConfig, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Value::deserialize(de)?;
    let mut merged = serde_json::to_value(toy_grpo_config(0)).map_err(D::Error::custom)?;
    match (given, &mut merged) {
        (serde_json::Value::Object(over), serde_json::Value::Object(base)) => base.extend(over),
        (other, _) => return Err(D::Error::custom(format!("grpo settings must be a table, got {other}"))),
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

#[derive(Debug, Clone)]
pub struct ToyTrainOutcome {
    pub policy: ToyPolicy,
    pub epochs: Vec<EpochMetrics>,
    pub steps: Vec<StepReport>,
    pub checkpoint: Checkpoint,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Initializes a policy from `cfg.grpo.seed` and trains it on streamed
/// episodes. `on_epoch` sees the metrics and a checkpoint after each epoch.
pub fn train_toy(
    cfg: &ToyTrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &Checkpoint) -> Result<()>,
) -> Result<ToyTrainOutcome> {
    let vocab = Vocabulary::standard();
    let reward = toy_reward(&vocab);
    let seed = cfg.grpo.seed;
    let mut policy = ToyPolicy::init(seed, vocab.clone(), cfg.shape)?;
    let mut trainer = GrpoTrainer::new(&policy, cfg.grpo.clone())?;
    let batch = cfg.grpo.batch_size;
    let steps_per_epoch = (cfg.episodes_per_epoch / batch).max(1);
    let mut epochs = Vec::with_capacity(cfg.grpo.epochs);
    let mut steps = Vec::new();
    for epoch in 0..cfg.grpo.epochs {
        let mut reports = Vec::with_capacity(steps_per_epoch);
        for _ in 0..steps_per_epoch {
            let s = steps.len() as u64 + reports.len() as u64;
            let first = seed.wrapping_mul(1_000_000).wrapping_add(s * batch as u64);
            let prompts = episode_prompts(&vocab, first, batch)?;
            reports.push(trainer.train_step(&mut policy, &prompts, &reward)?);
        }
        let metrics = EpochMetrics {
            epoch,
            steps: reports.len(),
            mean_reward: mean(reports.iter().map(|r| r.mean_reward)),
            mean_format_reward: mean(reports.iter().map(|r| r.mean_format_reward)),
            mean_accuracy_reward: mean(reports.iter().map(|r| r.mean_accuracy_reward)),
            mean_loss: mean(reports.iter().map(|r| r.loss)),
        };
        tracing::info!(epoch, mean_reward = metrics.mean_reward, "toy epoch finished");
        let mut ckpt = trainer.checkpoint(&policy);
        ckpt.epoch = epoch + 1;
        on_epoch(&metrics, &ckpt)?;
        epochs.push(metrics);
        steps.extend(reports);
    }
    let mut checkpoint = trainer.checkpoint(&policy);
    checkpoint.epoch = epochs.len();
    Ok(ToyTrainOutcome {
        policy,
        epochs,
        steps,
        checkpoint,
    })
}
