//! Group-relative advantages, the per-token KL estimator and the clipped
//! surrogate loss, together with its gradient with respect to the new
//! per-token log-probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::config::GrpoConfig;
use crate::grpo::TokenId;

/// Standardizes rewards against their group: `(r - mean) / std` with the
/// population standard deviation. A group with no spread gets all zeros.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::invalid(format!(
            "advantages need a group of at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("non-finite reward in group"));
    }
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `exp(ref - cur) - (ref - cur) - 1`: non-negative, zero only when the two agree.
pub fn kl_penalty_per_token(cur_logprob: f64, ref_logprob: f64) -> f64 {
    let d = ref_logprob - cur_logprob;
    d.exp_m1() - d
}

/// Derivative of [`kl_penalty_per_token`] with respect to `cur_logprob`.
pub fn kl_penalty_grad(cur_logprob: f64, ref_logprob: f64) -> f64 {
    -(ref_logprob - cur_logprob).exp_m1()
}

/// One prompt's sampled completions and everything the loss needs about them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub prompt_id: String,
    pub completions: Vec<Vec<TokenId>>,
    pub rewards: Vec<f64>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub ref_logprobs: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
}

impl CandidateGroup {
    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.completions.len();
        let check = |name: &str, n: usize| -> Result<()> {
            if n != g {
                return Err(Error::LengthMismatch {
                    context: format!("group `{}` {name}", self.prompt_id),
                    expected: g,
                    actual: n,
                });
            }
            Ok(())
        };
        check("rewards", self.rewards.len())?;
        check("old_logprobs", self.old_logprobs.len())?;
        check("ref_logprobs", self.ref_logprobs.len())?;
        check("advantages", self.advantages.len())?;
        for (i, c) in self.completions.iter().enumerate() {
            for (name, lp) in [("old_logprobs", &self.old_logprobs[i]), ("ref_logprobs", &self.ref_logprobs[i])] {
                if lp.len() != c.len() {
                    return Err(Error::LengthMismatch {
                        context: format!("group `{}` completion {i} {name}", self.prompt_id),
                        expected: c.len(),
                        actual: lp.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Loss value plus `d loss / d new_logprob` for every token of every completion.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub loss: f64,
    pub token_grads: Vec<Vec<f64>>,
}

/// Clipped-surrogate GRPO loss for one group:
///
/// `-(1/G) Σ_i (1/|o_i|) Σ_t [ min(ρ A_i, clip(ρ, 1-ε, 1+ε) A_i) - β·KL(new, ref) ]`
/// with `ρ = exp(new - old)`.
pub fn grpo_loss_with_grad(
    group: &CandidateGroup,
    new_logprobs: &[Vec<f64>],
    cfg: &GrpoConfig,
) -> Result<LossWithGrad> {
    group.validate()?;
    if new_logprobs.len() != group.len() {
        return Err(Error::LengthMismatch {
            context: format!("group `{}` new_logprobs", group.prompt_id),
            expected: group.len(),
            actual: new_logprobs.len(),
        });
    }
    let g = group.len() as f64;
    let (lo, hi) = (1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    let mut loss = 0.0;
    let mut token_grads = Vec::with_capacity(group.len());
    for (i, new) in new_logprobs.iter().enumerate() {
        let old = &group.old_logprobs[i];
        let reference = &group.ref_logprobs[i];
        if new.len() != old.len() {
            return Err(Error::LengthMismatch {
                context: format!("group `{}` completion {i} new_logprobs", group.prompt_id),
                expected: old.len(),
                actual: new.len(),
            });
        }
        let adv = group.advantages[i];
        let norm = if cfg.length_normalize && !new.is_empty() {
            1.0 / new.len() as f64
        } else {
            1.0
        };
        let scale = -norm / g;
        let mut sum = 0.0;
        let mut grads = Vec::with_capacity(new.len());
        for t in 0..new.len() {
            let ratio = (new[t] - old[t]).exp();
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(lo, hi) * adv;
            let (surrogate, d_surrogate) = if unclipped <= clipped {
                (unclipped, unclipped)
            } else {
                (clipped, 0.0)
            };
            let kl = kl_penalty_per_token(new[t], reference[t]);
            sum += surrogate - cfg.kl_beta * kl;
            grads.push(scale * (d_surrogate - cfg.kl_beta * kl_penalty_grad(new[t], reference[t])));
        }
        loss += scale * sum;
        token_grads.push(grads);
    }
    Ok(LossWithGrad { loss, token_grads })
}

pub fn grpo_loss(group: &CandidateGroup, new_logprobs: &[Vec<f64>], cfg: &GrpoConfig) -> Result<f64> {
    grpo_loss_with_grad(group, new_logprobs, cfg).map(|l| l.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn group(old: Vec<Vec<f64>>, reference: Vec<Vec<f64>>, adv: Vec<f64>) -> CandidateGroup {
        CandidateGroup {
            prompt_id: "p".into(),
            completions: old.iter().map(|o| vec![0; o.len()]).collect(),
            rewards: vec![0.0; adv.len()],
            old_logprobs: old,
            ref_logprobs: reference,
            advantages: adv,
        }
    }

    #[test]
    fn hand_advantages() {
        assert_eq!(compute_advantages(&[0.0, 2.0]).unwrap(), vec![-1.0, 1.0]);
        let a = compute_advantages(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        for (x, e) in a.iter().zip([-1.3416, -0.4472, 0.4472, 1.3416]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-4);
        }
        assert_eq!(compute_advantages(&[0.1; 7]).unwrap(), vec![0.0; 7]);
        assert!(compute_advantages(&[1.0]).is_err());
        assert!(compute_advantages(&[]).is_err());
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_penalty_per_token(-0.3, -0.3), 0.0);
        let v = kl_penalty_per_token(0.5f64.ln(), 0.25f64.ln());
        assert_abs_diff_eq!(v, 0.5 + 2f64.ln() - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.1931, epsilon = 1e-4);
    }

    #[test]
    fn zero_advantage_at_reference_is_zero_loss() {
        let lp = vec![vec![-1.0, -2.0], vec![-0.5]];
        let g = group(lp.clone(), lp.clone(), vec![0.0, 0.0]);
        let out = grpo_loss_with_grad(&g, &lp, &GrpoConfig::default()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.token_grads.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn opposite_advantages_cancel_but_gradient_does_not() {
        let lp = vec![vec![-1.0], vec![-1.0]];
        let g = group(lp.clone(), lp.clone(), vec![-1.0, 1.0]);
        let out = grpo_loss_with_grad(&g, &lp, &GrpoConfig::default()).unwrap();
        assert_abs_diff_eq!(out.loss, 0.0, epsilon = 1e-15);
        assert_eq!(out.token_grads, vec![vec![0.5], vec![-0.5]]);
    }

    #[test]
    fn clipping_kills_gradient_outside_trust_region() {
        let cfg = GrpoConfig::default();
        // ratio e^0.5 > 1.2 with positive advantage: clipped branch, zero surrogate gradient
        let g2 = group(
            vec![vec![-1.0], vec![-1.0]],
            vec![vec![-0.5], vec![-0.5]],
            vec![1.0, 1.0],
        );
        let out = grpo_loss_with_grad(&g2, &[vec![-0.5], vec![-0.5]], &cfg).unwrap();
        // only KL remains, and new == ref so its gradient is zero too
        assert_eq!(out.token_grads, vec![vec![0.0], vec![0.0]]);
        assert_abs_diff_eq!(out.loss, -1.2, epsilon = 1e-12);
    }

    #[test]
    fn misaligned_lengths_error() {
        let lp = vec![vec![-1.0], vec![-1.0]];
        let g = group(lp.clone(), lp, vec![0.0, 0.0]);
        let cfg = GrpoConfig::default();
        assert!(grpo_loss(&g, &[vec![-1.0]], &cfg).is_err());
        assert!(grpo_loss(&g, &[vec![-1.0], vec![-1.0, -2.0]], &cfg).is_err());
        let mut bad = g.clone();
        bad.advantages.pop();
        assert!(grpo_loss(&bad, &[vec![-1.0], vec![-1.0]], &cfg).is_err());
    }
}
