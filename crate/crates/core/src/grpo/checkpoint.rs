//! JSON checkpoint container.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "apca-grpo-checkpoint",
//!   "version": 1,
//!   "epoch": <completed epochs>,
//!   "step": <optimizer steps taken>,
//!   "config": { GrpoConfig },
//!   "policy": { architecture metadata, policy-specific },
//!   "tensors": [ { "name": str, "shape": [int], "values": [f64] } ],
//!   "rng": { "seed": hex(32 bytes), "stream": u64, "word_pos": decimal string },
//!   "optimizer": { Optimizer state } | null
//! }
//! ```
//!
//! `values` are row-major. Floats are written in shortest round-trip form, so
//! identical runs produce byte-identical files.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::config::GrpoConfig;
use crate::grpo::optim::Optimizer;

pub const CHECKPOINT_FORMAT: &str = "apca-grpo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Config(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Config("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Config(format!("rng word_pos: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub step: u64,
    pub config: GrpoConfig,
    pub policy: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
    pub rng: RngState,
    pub optimizer: Option<Optimizer>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint: format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        for t in &ckpt.tensors {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(Error::Config(format!("tensor `{}` shape does not match its values", t.name)));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    #[test]
    fn rng_state_resumes_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            rng.next_u64();
        }
        let state = RngState::capture(&rng);
        let mut resumed = state.restore().unwrap();
        assert_eq!(rng.next_u64(), resumed.next_u64());
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"format":"other","version":1,"epoch":0,"step":0,"config":{},"policy":null,"tensors":[],"rng":{"seed":"","stream":0,"word_pos":"0"},"optimizer":null}"#;
        assert!(Checkpoint::from_json(text).is_err());
    }
}
