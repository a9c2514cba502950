//! Splits raw model output into `<think>` / `<answer>` blocks and a verdict.
//!
//! Malformed output is data, never an error: every flag on [`ParsedResponse`]
//! records what was found so the resampler and the reward functions can act on it.

use serde::{Deserialize, Serialize};

use crate::corpus::Verdict;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Answer words that mean the patch is correct.
pub const CORRECT_KEYWORDS: [&str; 3] = ["correct", "fix", "fixed"];
/// Answer words that mean the patch is overfitting.
pub const OVERFITTING_KEYWORDS: [&str; 4] = ["overfitting", "buggy", "incorrect", "wrong"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think_text: Option<String>,
    pub answer_text: Option<String>,
    pub verdict: Option<Verdict>,
    pub has_think: bool,
    pub has_answer: bool,
    pub has_keyword: bool,
    pub ambiguous: bool,
}

impl ParsedResponse {
    pub fn is_wellformed(&self) -> bool {
        is_wellformed(self)
    }
}

/// Outcome of keyword classification on an answer span.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnswerClass {
    pub verdict: Option<Verdict>,
    pub ambiguous: bool,
    pub has_keyword: bool,
}

/// Inner text of the first `open ... close` span, matched non-greedily.
fn first_span<'a>(raw: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = raw.find(open)? + open.len();
    let len = raw[start..].find(close)?;
    Some(&raw[start..start + len])
}

/// Maximal runs of alphabetic characters, lowercased.
fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

pub fn classify_answer(answer_text: &str) -> AnswerClass {
    let mut correct = false;
    let mut overfitting = false;
    for w in words(answer_text) {
        correct |= CORRECT_KEYWORDS.contains(&w.as_str());
        overfitting |= OVERFITTING_KEYWORDS.contains(&w.as_str());
    }
    let verdict = match (correct, overfitting) {
        (true, false) => Some(Verdict::Correct),
        (false, true) => Some(Verdict::Overfitting),
        _ => None,
    };
    AnswerClass {
        verdict,
        ambiguous: correct && overfitting,
        has_keyword: correct || overfitting,
    }
}

pub fn parse(raw: &str) -> ParsedResponse {
    let think_text = first_span(raw, THINK_OPEN, THINK_CLOSE).map(str::to_owned);
    let answer_text = first_span(raw, ANSWER_OPEN, ANSWER_CLOSE).map(str::to_owned);
    let class = answer_text.as_deref().map(classify_answer).unwrap_or_default();
    ParsedResponse {
        has_think: think_text.is_some(),
        has_answer: answer_text.is_some(),
        has_keyword: class.has_keyword,
        ambiguous: class.ambiguous,
        verdict: class.verdict,
        think_text,
        answer_text,
    }
}

pub fn is_wellformed(p: &ParsedResponse) -> bool {
    p.has_think && p.has_answer && p.verdict.is_some()
}
