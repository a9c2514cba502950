//! Reasoning-based automated patch correctness assessment.
//!
//! The crate covers the whole pipeline around a reasoning model that
//! classifies program-repair patches as correct or overfitting:
//!
//! - [`corpus`]: JSON Lines datasets, deduplication, k-fold assignment
//! - [`prompt`]: the one-shot assessment prompt
//! - [`parser`]: `<think>` / `<answer>` output parsing
//! - [`rewards`]: format and accuracy rewards
//! - [`grpo`]: Group Relative Policy Optimization over a differentiable policy
//! - [`toy`]: a tiny from-scratch policy and synthetic task for GRPO
//! - [`client`]: chat-completion endpoint client with resampling, plus a mock server
//! - [`eval`]: confusion matrices, metrics, AUC and evaluation protocols
//! - [`cli`]: the workflows behind the `apca` binary

pub mod cli;
pub mod client;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grpo;
pub mod parser;
pub mod prompt;
pub mod rewards;
pub mod toy;

pub use corpus::{PatchSample, Verdict};
pub use error::{Error, Result};
