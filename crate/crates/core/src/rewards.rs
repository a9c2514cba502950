//! Format and accuracy rewards for a parsed response.

use serde::{Deserialize, Serialize};

use crate::corpus::Verdict;
use crate::parser::ParsedResponse;

pub const THINK_POINTS: f64 = 0.5;
pub const ANSWER_POINTS: f64 = 0.25;
pub const KEYWORD_POINTS: f64 = 0.25;

pub const CORRECT_MATCH_REWARD: f64 = 1.0;
/// Overfitting patches are the harder class and earn double.
pub const OVERFITTING_MATCH_REWARD: f64 = 2.0;

/// Largest total a single response can earn.
pub const MAX_TOTAL_REWARD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_reward: f64,
    pub accuracy_reward: f64,
    pub total: f64,
}

/// The keyword component only counts when an answer block exists.
pub fn format_reward(p: &ParsedResponse) -> f64 {
    let mut r = 0.0;
    if p.has_think {
        r += THINK_POINTS;
    }
    if p.has_answer {
        r += ANSWER_POINTS;
        if p.has_keyword {
            r += KEYWORD_POINTS;
        }
    }
    r
}

pub fn accuracy_reward(predicted: Option<Verdict>, gold: Verdict) -> f64 {
    match predicted {
        Some(p) if p == gold => match gold {
            Verdict::Correct => CORRECT_MATCH_REWARD,
            Verdict::Overfitting => OVERFITTING_MATCH_REWARD,
        },
        _ => 0.0,
    }
}

pub fn total_reward(p: &ParsedResponse, gold: Verdict) -> RewardBreakdown {
    let format_reward = format_reward(p);
    let accuracy_reward = accuracy_reward(p.verdict, gold);
    RewardBreakdown {
        format_reward,
        accuracy_reward,
        total: format_reward + accuracy_reward,
    }
}

/// Parses `raw` and scores it against `gold`.
pub fn score_text(raw: &str, gold: Verdict) -> RewardBreakdown {
    total_reward(&crate::parser::parse(raw), gold)
}

/// Best mean total reward achievable on a population where a fraction
/// `overfitting_share` of the golds are overfitting.
pub fn achievable_mean(overfitting_share: f64) -> f64 {
    1.0 + CORRECT_MATCH_REWARD * (1.0 - overfitting_share) + OVERFITTING_MATCH_REWARD * overfitting_share
}
