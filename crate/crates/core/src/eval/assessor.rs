//! Things that turn patches into verdicts and scores.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::AssessmentRecord;
use crate::corpus::{normalize_code, PatchSample, Verdict};
use crate::error::{Error, Result};
use crate::eval::score::{binary_score, derive_score, derive_score_from_votes, ScoreMode};
use crate::grpo::{train_loop, DifferentiablePolicy, GrpoConfig, TokenId, TrainingPrompt};
use crate::parser;
use crate::toy::{toy_reward, PolicyShape, ToyPolicy, Vocabulary, FILLER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    /// `None` when the assessor could not produce a well-formed answer.
    pub verdict: Option<Verdict>,
    pub score: f64,
}

pub trait Assessor {
    fn name(&self) -> String;

    /// Trains on `train`. Fixed assessors ignore it.
    fn fit(&mut self, _train: &[PatchSample]) -> Result<()> {
        Ok(())
    }

    /// One prediction per sample, in input order.
    fn assess(&self, samples: &[PatchSample], mode: ScoreMode) -> Result<Vec<Prediction>>;
}

fn fixed_prediction(id: &str, verdict: Verdict, mode: ScoreMode) -> Result<Prediction> {
    let votes = vec![Some(verdict); mode.samples()];
    Ok(Prediction {
        sample_id: id.to_string(),
        verdict: Some(verdict),
        score: derive_score_from_votes(&votes, mode)?,
    })
}

/// Returns the gold label. Upper bound for sanity checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAssessor;

impl Assessor for OracleAssessor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn assess(&self, samples: &[PatchSample], mode: ScoreMode) -> Result<Vec<Prediction>> {
        samples.iter().map(|s| fixed_prediction(&s.id, s.label, mode)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantAssessor(pub Verdict);

impl Assessor for ConstantAssessor {
    fn name(&self) -> String {
        format!("constant-{}", self.0)
    }

    fn assess(&self, samples: &[PatchSample], mode: ScoreMode) -> Result<Vec<Prediction>> {
        samples.iter().map(|s| fixed_prediction(&s.id, self.0, mode)).collect()
    }
}

/// Replays verdicts from endpoint assessment records.
#[derive(Debug, Clone)]
pub struct RecordsAssessor {
    records: HashMap<String, AssessmentRecord>,
}

impl RecordsAssessor {
    pub fn new(records: Vec<AssessmentRecord>) -> Self {
        RecordsAssessor {
            records: records.into_iter().map(|r| (r.sample_id.clone(), r)).collect(),
        }
    }
}

impl Assessor for RecordsAssessor {
    fn name(&self) -> String {
        "records".into()
    }

    fn assess(&self, samples: &[PatchSample], mode: ScoreMode) -> Result<Vec<Prediction>> {
        samples
            .iter()
            .map(|s| {
                let rec = self
                    .records
                    .get(&s.id)
                    .ok_or_else(|| Error::invalid(format!("no assessment record for sample `{}`", s.id)))?;
                Ok(Prediction {
                    sample_id: s.id.clone(),
                    verdict: rec.verdict,
                    score: derive_score(rec, mode)?,
                })
            })
            .collect()
    }
}

/// Maps a patch to a two-token toy prompt by hashing its normalized code into
/// filler buckets. The toy policy can only learn label statistics per bucket;
/// it exists to run the trainable-assessor path end to end.
pub fn patch_prompt(vocab: &Vocabulary, sample: &PatchSample) -> Result<Vec<TokenId>> {
    let mut h = Sha256::new();
    h.update(normalize_code(&sample.buggy_code));
    h.update([0u8]);
    h.update(normalize_code(&sample.fixed_code));
    let digest = h.finalize();
    [digest[0], digest[1]]
        .iter()
        .map(|b| vocab.id(FILLER[*b as usize % FILLER.len()]))
        .collect()
}

fn id_seed(seed: u64, id: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(id).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Toy policy as an assessor. `fit` retrains from a fresh seeded init, so
/// folds never share weights.
#[derive(Debug, Clone)]
pub struct ToyAssessor {
    pub cfg: GrpoConfig,
    pub shape: PolicyShape,
    policy: ToyPolicy,
    trainable: bool,
}

impl ToyAssessor {
    pub fn new(cfg: GrpoConfig, shape: PolicyShape) -> Result<Self> {
        cfg.validate()?;
        let policy = ToyPolicy::init(cfg.seed, Vocabulary::standard(), shape)?;
        Ok(ToyAssessor {
            cfg,
            shape,
            policy,
            trainable: true,
        })
    }

    /// Frozen policy, e.g. loaded from a checkpoint. `fit` leaves it alone.
    pub fn frozen(policy: ToyPolicy, cfg: GrpoConfig) -> Self {
        ToyAssessor {
            shape: policy.shape(),
            cfg,
            policy,
            trainable: false,
        }
    }

    pub fn policy(&self) -> &ToyPolicy {
        &self.policy
    }
}

impl Assessor for ToyAssessor {
    fn name(&self) -> String {
        if self.trainable {
            "toy-grpo".into()
        } else {
            "toy-frozen".into()
        }
    }

    fn fit(&mut self, train: &[PatchSample]) -> Result<()> {
        if !self.trainable {
            return Ok(());
        }
        let vocab = Vocabulary::standard();
        let prompts = train
            .iter()
            .map(|s| {
                Ok(TrainingPrompt {
                    id: s.id.clone(),
                    tokens: patch_prompt(&vocab, s)?,
                    gold: s.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let init = ToyPolicy::init(self.cfg.seed, vocab.clone(), self.shape)?;
        let reward = toy_reward(&vocab);
        let out = train_loop(init, &prompts, &reward, &self.cfg, |_, _| Ok(()))?;
        self.policy = out.policy;
        Ok(())
    }

    /// Draws `mode.samples()` completions per patch. The verdict is the first
    /// well-formed one; the score follows `mode`.
    fn assess(&self, samples: &[PatchSample], mode: ScoreMode) -> Result<Vec<Prediction>> {
        let vocab = self.policy.vocab();
        samples
            .par_iter()
            .map(|s| {
                let prompt = patch_prompt(vocab, s)?;
                let base = id_seed(self.cfg.seed, &s.id);
                let mut votes = Vec::with_capacity(mode.samples());
                for j in 0..mode.samples() as u64 {
                    let r = self.policy.sample(
                        &prompt,
                        self.cfg.temperature,
                        self.cfg.max_completion_tokens,
                        base.wrapping_add(j),
                    )?;
                    let parsed = parser::parse(&vocab.detokenize(&r.tokens)?);
                    votes.push(if parsed.is_wellformed() { parsed.verdict } else { None });
                }
                let verdict = votes.iter().flatten().next().copied();
                let score = match mode {
                    ScoreMode::Binary => binary_score(verdict),
                    ScoreMode::Vote { .. } => derive_score_from_votes(&votes, mode)?,
                };
                Ok(Prediction {
                    sample_id: s.id.clone(),
                    verdict,
                    score,
                })
            })
            .collect()
    }
}
