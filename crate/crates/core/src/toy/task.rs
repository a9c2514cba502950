//! Synthetic tag-emission task.
//!
//! Each prompt is a hint token naming the gold verdict followed by one random
//! filler token. A policy earns the full reward by emitting
//! `<think> … </think> <answer> keyword </answer>` with a keyword of the
//! hinted class, so the achievable mean total reward is 2.5 on a balanced mix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Verdict;
use crate::error::Result;
use crate::grpo::{TokenId, TrainingPrompt};
use crate::parser;
use crate::rewards::{self, RewardBreakdown};
use crate::toy::vocab::{Vocabulary, FILLER, HINT_CORRECT, HINT_OVERFITTING};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub prompt_tokens: Vec<TokenId>,
    pub gold: Verdict,
}

pub fn hint_token(vocab: &Vocabulary, gold: Verdict) -> Result<TokenId> {
    vocab.id(match gold {
        Verdict::Correct => HINT_CORRECT,
        Verdict::Overfitting => HINT_OVERFITTING,
    })
}

pub fn gen_episode(seed: u64, vocab: &Vocabulary) -> Result<EpisodeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gold = if rng.gen_bool(0.5) {
        Verdict::Overfitting
    } else {
        Verdict::Correct
    };
    let mut prompt_tokens = vec![hint_token(vocab, gold)?];
    prompt_tokens.push(vocab.id(FILLER[rng.gen_range(0..FILLER.len())])?);
    Ok(EpisodeSpec { prompt_tokens, gold })
}

impl EpisodeSpec {
    pub fn into_prompt(self, id: impl Into<String>) -> TrainingPrompt {
        TrainingPrompt {
            id: id.into(),
            tokens: self.prompt_tokens,
            gold: self.gold,
        }
    }
}

/// `count` prompts generated from consecutive seeds starting at `first_seed`.
pub fn episode_prompts(vocab: &Vocabulary, first_seed: u64, count: usize) -> Result<Vec<TrainingPrompt>> {
    (0..count as u64)
        .map(|i| {
            let seed = first_seed.wrapping_add(i);
            Ok(gen_episode(seed, vocab)?.into_prompt(format!("episode-{seed}")))
        })
        .collect()
}

/// Scores a completion by rendering it to text and running the response parser.
/// Unknown token ids score zero.
pub fn score_completion(vocab: &Vocabulary, completion: &[TokenId], gold: Verdict) -> RewardBreakdown {
    match vocab.detokenize(completion) {
        Ok(text) => rewards::total_reward(&parser::parse(&text), gold),
        Err(_) => RewardBreakdown {
            format_reward: 0.0,
            accuracy_reward: 0.0,
            total: 0.0,
        },
    }
}

/// Reward function for [`crate::grpo::train_step`].
pub fn toy_reward(vocab: &Vocabulary) -> impl Fn(&TrainingPrompt, &[TokenId]) -> RewardBreakdown + Sync + '_ {
    move |prompt, completion| score_completion(vocab, completion, prompt.gold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};
    use crate::toy::vocab::EOS;

    #[test]
    fn episodes_are_seeded_and_hinted() {
        let v = Vocabulary::standard();
        assert_eq!(gen_episode(42, &v).unwrap(), gen_episode(42, &v).unwrap());
        for seed in 0..500 {
            let e = gen_episode(seed, &v).unwrap();
            assert_eq!(e.prompt_tokens[0], hint_token(&v, e.gold).unwrap());
            assert_eq!(e.prompt_tokens.len(), 2);
        }
    }

    #[test]
    fn perfect_overfitting_completion_scores_three() {
        let v = Vocabulary::standard();
        let c = v
            .encode(&[THINK_OPEN, "alpha", THINK_CLOSE, ANSWER_OPEN, "overfitting", ANSWER_CLOSE, EOS])
            .unwrap();
        let r = score_completion(&v, &c, Verdict::Overfitting);
        assert_eq!(r.total, 3.0);
    }
}
