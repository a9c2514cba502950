#![allow(dead_code)]

use std::path::{Path, PathBuf};

use apca::client::EndpointConfig;
use apca::grpo::{
    build_group, group_loss_gradient, grpo_loss, CandidateGroup, DifferentiablePolicy, GrpoConfig, TrainingPrompt,
};
use apca::toy::{toy_reward, PolicyShape, ToyPolicy, Vocabulary, HINT_OVERFITTING};
use apca::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Endpoint config pointing at `base_url` with short backoff for tests.
pub fn endpoint(base_url: &str) -> EndpointConfig {
    EndpointConfig {
        timeout_seconds: 10.0,
        max_retries: 2,
        retry_backoff_ms: 5,
        ..EndpointConfig::new(base_url, "test-model")
    }
}

pub fn write_endpoint(dir: &Path, base_url: &str) -> PathBuf {
    let path = dir.join("endpoint.json");
    std::fs::write(&path, serde_json::to_string_pretty(&endpoint(base_url)).unwrap()).unwrap();
    path
}

pub fn well_formed(keyword: &str) -> String {
    format!("<think>checked the guard against the failing test</think>\n<answer>{keyword}</answer>")
}

pub const H: f64 = 1e-5;
/// Per-parameter tolerance: |analytic - numeric| ≤ REL_TOL · max(|analytic|, |numeric|, FLOOR).
pub const REL_TOL: f64 = 1e-4;
pub const FLOOR: f64 = 1e-6;

fn perturbed(policy: &ToyPolicy, scale: f64, seed: u64) -> ToyPolicy {
    let mut p = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in p.params_mut() {
        *w += rng.gen_range(-scale..scale);
    }
    p
}

fn setup(cfg: &GrpoConfig) -> (ToyPolicy, Vec<usize>, CandidateGroup) {
    let vocab = Vocabulary::standard();
    let policy = ToyPolicy::init(3, vocab.clone(), PolicyShape::default()).unwrap();
    assert!(policy.num_params() <= 5_000);
    let reference = perturbed(&policy, 0.05, 11);
    let prompt = TrainingPrompt {
        id: "fd".into(),
        tokens: vocab.encode(&[HINT_OVERFITTING, "gamma"]).unwrap(),
        gold: Verdict::Overfitting,
    };
    let reward = toy_reward(&vocab);
    let seeds: Vec<u64> = (0..cfg.group_size as u64).collect();
    let (mut group, _) = build_group(&policy, &reference, &prompt, &reward, cfg, &seeds).unwrap();
    // Spread the rewards so every completion carries a nonzero advantage, and
    // move old log-probs off the current policy so ratios differ from 1.
    group.rewards = (0..group.len()).map(|i| i as f64 * 0.37).collect();
    group.advantages = apca::grpo::compute_advantages(&group.rewards).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for lp in group.old_logprobs.iter_mut().flatten() {
        *lp += rng.gen_range(-0.05..0.05);
    }
    (policy, prompt.tokens, group)
}

fn loss_at(policy: &ToyPolicy, prompt: &[usize], group: &CandidateGroup, cfg: &GrpoConfig) -> f64 {
    let lps: Vec<Vec<f64>> = group
        .completions
        .iter()
        .map(|c| policy.token_logprobs(prompt, c).unwrap())
        .collect();
    grpo_loss(group, &lps, cfg).unwrap()
}

/// Worst per-parameter relative error of the analytic gradient.
pub fn worst_relative_error(cfg: &GrpoConfig) -> f64 {
    let (policy, prompt, group) = setup(cfg);
    let mut analytic = vec![0.0; policy.num_params()];
    let loss = group_loss_gradient(&policy, &prompt, &group, cfg, 1.0, &mut analytic).unwrap();
    assert!((loss - loss_at(&policy, &prompt, &group, cfg)).abs() < 1e-12);
    let norm = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm > 1e-3, "gradient norm {norm} is too small to test anything");
    let mut worst: f64 = 0.0;
    let mut probe = policy.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let w = policy.params()[i];
        probe.params_mut()[i] = w + H;
        let up = loss_at(&probe, &prompt, &group, cfg);
        probe.params_mut()[i] = w - H;
        let down = loss_at(&probe, &prompt, &group, cfg);
        probe.params_mut()[i] = w;
        let numeric = (up - down) / (2.0 * H);
        let scale = a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}
