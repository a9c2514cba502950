//! Fixed-window feedforward token policy with hand-written backpropagation.
//!
//! The next-token distribution depends on a fixed window of `W` slots. Slot 0
//! always holds the first prompt token (the task conditioning); slots
//! `1..W` hold the last `W-1` tokens of prompt + completion, left-padded with
//! end-of-sequence:
//!
//! ```text
//! x      = concat(E[w_0], ..., E[w_{W-1}])        (W·d)
//! h      = tanh(W1 x + b1)                         (hidden)
//! logits = W2 h + b2                               (vocab)
//! ```
//!
//! Initialization (deterministic in the seed, ChaCha8 stream): embeddings
//! `U(-0.5, 0.5)`, `W1 ~ U(±1/√(W·d))`, `W2 ~ U(±1/√hidden)`, biases zero.
//! Because `|h| < 1`, every initial logit is bounded by `√hidden`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::{DifferentiablePolicy, NamedTensor, Rollout, TokenId};
use crate::toy::vocab::Vocabulary;

pub const MAX_PARAMS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        PolicyShape {
            window: 8,
            embed_dim: 8,
            hidden: 32,
        }
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    vocab: usize,
    window: usize,
    embed: usize,
    hidden: usize,
}

impl Layout {
    fn input(&self) -> usize {
        self.window * self.embed
    }
    fn emb(&self) -> usize {
        0
    }
    fn w1(&self) -> usize {
        self.vocab * self.embed
    }
    fn b1(&self) -> usize {
        self.w1() + self.hidden * self.input()
    }
    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.vocab * self.hidden
    }
    fn total(&self) -> usize {
        self.b2() + self.vocab
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab: Vocabulary,
    shape: PolicyShape,
    layout: Layout,
    params: Vec<f64>,
}

/// Activations recorded for one predicted position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrace {
    pub window: Vec<TokenId>,
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub target: TokenId,
}

/// Forward pass over a whole completion, kept for [`ToyPolicy::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub positions: Vec<PositionTrace>,
}

impl ForwardTrace {
    pub fn logprobs(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|p| log_softmax(&p.logits)[p.target])
            .collect()
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

impl ToyPolicy {
    fn zeros(vocab: Vocabulary, shape: PolicyShape) -> Result<Self> {
        if shape.window == 0 || shape.embed_dim == 0 || shape.hidden == 0 {
            return Err(Error::invalid("policy dimensions must be positive"));
        }
        let layout = Layout {
            vocab: vocab.len(),
            window: shape.window,
            embed: shape.embed_dim,
            hidden: shape.hidden,
        };
        if layout.total() > MAX_PARAMS {
            return Err(Error::invalid(format!(
                "policy would have {} parameters, limit is {MAX_PARAMS}",
                layout.total()
            )));
        }
        Ok(ToyPolicy {
            params: vec![0.0; layout.total()],
            vocab,
            shape,
            layout,
        })
    }

    /// Randomly initialized policy; see the module docs for the scheme.
    pub fn init(seed: u64, vocab: Vocabulary, shape: PolicyShape) -> Result<Self> {
        let mut p = Self::zeros(vocab, shape)?;
        let l = p.layout;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = 1.0 / (l.input() as f64).sqrt();
        let a2 = 1.0 / (l.hidden as f64).sqrt();
        for v in &mut p.params[l.emb()..l.w1()] {
            *v = rng.gen_range(-0.5..0.5);
        }
        for v in &mut p.params[l.w1()..l.b1()] {
            *v = rng.gen_range(-a1..a1);
        }
        for v in &mut p.params[l.w2()..l.b2()] {
            *v = rng.gen_range(-a2..a2);
        }
        Ok(p)
    }

    /// All-zero parameters: every logit is 0, so every token has probability 1/|V|.
    pub fn uniform(vocab: Vocabulary, shape: PolicyShape) -> Result<Self> {
        Self::zeros(vocab, shape)
    }

    pub fn from_tensors(vocab: Vocabulary, shape: PolicyShape, tensors: &[NamedTensor]) -> Result<Self> {
        let mut p = Self::zeros(vocab, shape)?;
        let expected = p.named_tensors();
        if tensors.len() != expected.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        let mut offset = 0;
        for (want, got) in expected.iter().zip(tensors) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.values.len() {
                return Err(Error::Config(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
            p.params[offset..offset + got.values.len()].copy_from_slice(&got.values);
            offset += got.values.len();
        }
        if p.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: "checkpoint" });
        }
        Ok(p)
    }

    /// Rebuilds a policy from a checkpoint written by a toy run.
    pub fn from_checkpoint(ckpt: &crate::grpo::Checkpoint) -> Result<Self> {
        let meta: ToyPolicyMeta = serde_json::from_value(ckpt.policy.clone())?;
        Self::from_tensors(meta.vocab, meta.shape, &ckpt.tensors)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    fn window_at(&self, prompt: &[TokenId], completion: &[TokenId], t: usize) -> Vec<TokenId> {
        let w = self.shape.window;
        let len = prompt.len() + t;
        let at = |i: usize| if i < prompt.len() { prompt[i] } else { completion[i - prompt.len()] };
        let mut out = Vec::with_capacity(w);
        out.push(prompt.first().copied().unwrap_or(self.vocab.eos()));
        for j in 1..w {
            let pos = len as isize - (w - 1) as isize + (j - 1) as isize;
            out.push(if pos < 0 { self.vocab.eos() } else { at(pos as usize) });
        }
        out
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab.len()) {
            Some(&t) => Err(Error::TokenOutOfRange(t)),
            None => Ok(()),
        }
    }

    fn position(&self, window: Vec<TokenId>, target: TokenId) -> Result<PositionTrace> {
        let l = &self.layout;
        let p = &self.params;
        let mut input = Vec::with_capacity(l.input());
        for &tok in &window {
            let start = l.emb() + tok * l.embed;
            input.extend_from_slice(&p[start..start + l.embed]);
        }
        let mut hidden = Vec::with_capacity(l.hidden);
        for k in 0..l.hidden {
            let row = &p[l.w1() + k * l.input()..l.w1() + (k + 1) * l.input()];
            let a = p[l.b1() + k] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
            hidden.push(a.tanh());
        }
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: "hidden" });
        }
        let mut logits = Vec::with_capacity(l.vocab);
        for v in 0..l.vocab {
            let row = &p[l.w2() + v * l.hidden..l.w2() + (v + 1) * l.hidden];
            logits.push(p[l.b2() + v] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>());
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: "output" });
        }
        Ok(PositionTrace {
            window,
            input,
            hidden,
            logits,
            target,
        })
    }

    /// Logits for the token following `context`.
    pub fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        self.check_tokens(context)?;
        let window = self.window_at(context, &[], 0);
        Ok(self.position(window, 0)?.logits)
    }

    pub fn forward(&self, prompt: &[TokenId], completion: &[TokenId]) -> Result<ForwardTrace> {
        self.check_tokens(prompt)?;
        self.check_tokens(completion)?;
        let positions = (0..completion.len())
            .map(|t| self.position(self.window_at(prompt, completion, t), completion[t]))
            .collect::<Result<_>>()?;
        Ok(ForwardTrace { positions })
    }

    /// Reverse-mode gradient of `Σ_t upstream[t] · logprob_t` for a recorded forward pass.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(trace, upstream, &mut grad)?;
        Ok(grad)
    }

    fn backward_into(&self, trace: &ForwardTrace, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        if upstream.len() != trace.positions.len() {
            return Err(Error::LengthMismatch {
                context: "backward upstream".into(),
                expected: trace.positions.len(),
                actual: upstream.len(),
            });
        }
        let l = &self.layout;
        let p = &self.params;
        let mut d_logits = vec![0.0; l.vocab];
        let mut d_hidden = vec![0.0; l.hidden];
        let mut d_input = vec![0.0; l.input()];
        for (pos, &g) in trace.positions.iter().zip(upstream) {
            if g == 0.0 {
                continue;
            }
            // d logp[target] / d logits = onehot(target) - softmax
            let probs = softmax(&pos.logits);
            for (v, d) in d_logits.iter_mut().enumerate() {
                *d = g * (f64::from(u8::from(v == pos.target)) - probs[v]);
            }
            if d_logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: "output" });
            }
            d_hidden.iter_mut().for_each(|x| *x = 0.0);
            for (v, &dz) in d_logits.iter().enumerate() {
                grad[l.b2() + v] += dz;
                let w_row = l.w2() + v * l.hidden;
                for k in 0..l.hidden {
                    grad[w_row + k] += dz * pos.hidden[k];
                    d_hidden[k] += dz * p[w_row + k];
                }
            }
            d_input.iter_mut().for_each(|x| *x = 0.0);
            for k in 0..l.hidden {
                let da = d_hidden[k] * (1.0 - pos.hidden[k] * pos.hidden[k]);
                if !da.is_finite() {
                    return Err(Error::NonFinite { layer: "hidden" });
                }
                grad[l.b1() + k] += da;
                let w_row = l.w1() + k * l.input();
                for i in 0..l.input() {
                    grad[w_row + i] += da * pos.input[i];
                    d_input[i] += da * p[w_row + i];
                }
            }
            for (slot, &tok) in pos.window.iter().enumerate() {
                let e = l.emb() + tok * l.embed;
                for j in 0..l.embed {
                    grad[e + j] += d_input[slot * l.embed + j];
                }
            }
            if d_input.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: "embedding" });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ToyPolicyMeta {
    kind: String,
    vocab: Vocabulary,
    shape: PolicyShape,
}

impl DifferentiablePolicy for ToyPolicy {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn token_logprobs(&self, prompt: &[TokenId], completion: &[TokenId]) -> Result<Vec<f64>> {
        Ok(self.forward(prompt, completion)?.logprobs())
    }

    fn accumulate_logprob_grad(
        &self,
        prompt: &[TokenId],
        completion: &[TokenId],
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                context: "gradient buffer".into(),
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let trace = self.forward(prompt, completion)?;
        self.backward_into(&trace, upstream, grad)
    }

    fn sample(&self, prompt: &[TokenId], temperature: f64, max_len: usize, seed: u64) -> Result<Rollout> {
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::invalid("temperature must be positive"));
        }
        if max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        self.check_tokens(prompt)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tokens = Vec::new();
        let mut sample_logprobs = Vec::new();
        let mut logprobs = Vec::new();
        let eos = self.vocab.eos();
        while tokens.len() < max_len {
            let window = self.window_at(prompt, &tokens, tokens.len());
            let pos = self.position(window, 0)?;
            let scaled: Vec<f64> = pos.logits.iter().map(|z| z / temperature).collect();
            let lp_t = log_softmax(&scaled);
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut pick = None;
            for (v, lp) in lp_t.iter().enumerate() {
                cum += lp.exp();
                if u < cum {
                    pick = Some(v);
                    break;
                }
            }
            // rounding left u above the last cumulative sum
            let pick = pick.unwrap_or_else(|| {
                (0..lp_t.len())
                    .rev()
                    .find(|&v| lp_t[v] > f64::NEG_INFINITY)
                    .unwrap_or(eos)
            });
            sample_logprobs.push(lp_t[pick]);
            logprobs.push(log_softmax(&pos.logits)[pick]);
            tokens.push(pick);
            if pick == eos {
                break;
            }
        }
        Ok(Rollout {
            tokens,
            sample_logprobs,
            logprobs,
        })
    }

    fn named_tensors(&self) -> Vec<NamedTensor> {
        let l = &self.layout;
        let t = |name: &str, shape: Vec<usize>, range: std::ops::Range<usize>| NamedTensor {
            name: name.to_string(),
            shape,
            values: self.params[range].to_vec(),
        };
        vec![
            t("embedding", vec![l.vocab, l.embed], l.emb()..l.w1()),
            t("hidden.weight", vec![l.hidden, l.input()], l.w1()..l.b1()),
            t("hidden.bias", vec![l.hidden], l.b1()..l.w2()),
            t("output.weight", vec![l.vocab, l.hidden], l.w2()..l.b2()),
            t("output.bias", vec![l.vocab], l.b2()..l.total()),
        ]
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::to_value(ToyPolicyMeta {
            kind: "toy-window-mlp".into(),
            vocab: self.vocab.clone(),
            shape: self.shape,
        })
        .expect("metadata serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::vocab::HINT_OVERFITTING;

    fn policy(seed: u64) -> ToyPolicy {
        ToyPolicy::init(seed, Vocabulary::standard(), PolicyShape::default()).unwrap()
    }

    #[test]
    fn parameter_budget() {
        let p = policy(0);
        assert!(p.num_params() <= 5_000, "{}", p.num_params());
        let big = PolicyShape {
            window: 16,
            embed_dim: 64,
            hidden: 64,
        };
        assert!(ToyPolicy::init(0, Vocabulary::standard(), big).is_err());
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(policy(3).params(), policy(3).params());
        assert_ne!(policy(3).params(), policy(4).params());
        assert!(policy(3).params().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn init_logits_are_bounded() {
        let p = policy(5);
        let v = p.vocab();
        let probe = v.encode(&[HINT_OVERFITTING, "alpha", "beta", "<think>"]).unwrap();
        for z in p.next_logits(&probe).unwrap() {
            assert!(z.abs() <= 10.0);
        }
    }

    #[test]
    fn uniform_policy_logprobs() {
        let v = Vocabulary::standard();
        let n = v.len() as f64;
        let p = ToyPolicy::uniform(v, PolicyShape::default()).unwrap();
        for lp in p.token_logprobs(&[1, 2], &[3, 4, 0]).unwrap() {
            assert!((lp + n.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn window_pads_with_eos() {
        let p = policy(0);
        let w = p.window_at(&[5, 6], &[7], 1);
        assert_eq!(w, vec![5, 0, 0, 0, 0, 5, 6, 7]);
        let long: Vec<TokenId> = (1..=10).collect();
        let mut expected = vec![1];
        expected.extend(4..=10);
        assert_eq!(p.window_at(&long, &[], 0), expected);
    }

    #[test]
    fn out_of_vocab_token_errors() {
        let p = policy(0);
        assert!(matches!(p.token_logprobs(&[0], &[500]), Err(Error::TokenOutOfRange(500))));
        assert!(p.sample(&[99], 1.0, 3, 0).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = policy(1);
        let trace = p.forward(&[13, 15], &[1, 15, 2, 0]).unwrap();
        assert!(p.backward(&trace, &[0.0; 4]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_parameters_are_reported() {
        let mut p = policy(1);
        let l = p.layout;
        p.params_mut()[l.w2()] = f64::NAN;
        assert!(matches!(p.token_logprobs(&[1], &[2]), Err(Error::NonFinite { layer: "output" })));
    }

    #[test]
    fn sample_respects_max_len_and_seed() {
        let p = policy(2);
        for seed in 0..50 {
            let r = p.sample(&[13], 1.0, 5, seed).unwrap();
            assert!(r.tokens.len() <= 5 && !r.tokens.is_empty());
            assert_eq!(r, p.sample(&[13], 1.0, 5, seed).unwrap());
            let direct = p.token_logprobs(&[13], &r.tokens).unwrap();
            assert_eq!(direct, r.logprobs);
        }
    }

    #[test]
    fn tiny_temperature_is_greedy() {
        let p = policy(7);
        let r = p.sample(&[14, 16], 1e-6, 6, 123).unwrap();
        let mut ctx = vec![14, 16];
        for &tok in &r.tokens {
            let logits = p.next_logits(&ctx).unwrap();
            let argmax = (0..logits.len())
                .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
                .unwrap();
            assert_eq!(tok, argmax);
            ctx.push(tok);
        }
    }

    #[test]
    fn tensors_round_trip() {
        let p = policy(9);
        let q = ToyPolicy::from_tensors(p.vocab().clone(), p.shape(), &p.named_tensors()).unwrap();
        assert_eq!(p, q);
        let mut bad = p.named_tensors();
        bad[0].shape = vec![1, 1];
        assert!(ToyPolicy::from_tensors(p.vocab().clone(), p.shape(), &bad).is_err());
    }
}
