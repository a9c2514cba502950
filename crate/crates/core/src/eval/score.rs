//! Continuous scores for AUC from generative verdicts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::client::AssessmentRecord;
use crate::corpus::Verdict;
use crate::error::{Error, Result};

/// `binary`: 1.0 Overfitting, 0.0 Correct, 0.5 unresolved.
/// `vote-k`: share of `k` independent samples voting Overfitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoreMode {
    #[default]
    Binary,
    Vote { k: usize },
}

impl ScoreMode {
    /// Completions an assessor should draw per sample.
    pub fn samples(self) -> usize {
        match self {
            ScoreMode::Binary => 1,
            ScoreMode::Vote { k } => k,
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreMode::Binary => f.write_str("binary"),
            ScoreMode::Vote { k } => write!(f, "vote-{k}"),
        }
    }
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "binary" {
            return Ok(ScoreMode::Binary);
        }
        match s.strip_prefix("vote-").map(str::parse::<usize>) {
            Some(Ok(k)) if k >= 1 => Ok(ScoreMode::Vote { k }),
            _ => Err(Error::invalid(format!("score mode `{s}` is not `binary` or `vote-<k>` with k ≥ 1"))),
        }
    }
}

impl TryFrom<String> for ScoreMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScoreMode> for String {
    fn from(m: ScoreMode) -> Self {
        m.to_string()
    }
}

pub fn binary_score(verdict: Option<Verdict>) -> f64 {
    match verdict {
        Some(Verdict::Overfitting) => 1.0,
        Some(Verdict::Correct) => 0.0,
        None => 0.5,
    }
}

/// Share of votes that are Overfitting; unresolved votes count as not
/// Overfitting.
pub fn vote_score(votes: &[Option<Verdict>]) -> Result<f64> {
    if votes.is_empty() {
        return Err(Error::invalid("vote score needs at least one sample"));
    }
    let o = votes.iter().filter(|v| **v == Some(Verdict::Overfitting)).count();
    Ok(o as f64 / votes.len() as f64)
}

/// Scores `votes` under `mode`. Binary mode reads the first vote only; vote-k
/// needs exactly `k` votes.
pub fn derive_score_from_votes(votes: &[Option<Verdict>], mode: ScoreMode) -> Result<f64> {
    match mode {
        ScoreMode::Binary => Ok(binary_score(votes.first().copied().flatten())),
        ScoreMode::Vote { k } if votes.len() == k => vote_score(votes),
        ScoreMode::Vote { k } => Err(Error::LengthMismatch {
            context: format!("vote-{k} score"),
            expected: k,
            actual: votes.len(),
        }),
    }
}

/// An endpoint record holds one final verdict, so only binary mode applies.
pub fn derive_score(record: &AssessmentRecord, mode: ScoreMode) -> Result<f64> {
    match mode {
        ScoreMode::Binary => Ok(binary_score(record.verdict)),
        ScoreMode::Vote { .. } => Err(Error::invalid(format!(
            "{mode} needs several independent samples per patch; assessment records hold a single verdict"
        ))),
    }
}
