//! A desk-scale differentiable policy over a symbolic vocabulary and the
//! synthetic task used to exercise GRPO end to end.

mod model;
mod task;
mod train;
mod vocab;

pub use model::{log_softmax, softmax, ForwardTrace, PolicyShape, PositionTrace, ToyPolicy, MAX_PARAMS};
pub use task::{episode_prompts, gen_episode, hint_token, score_completion, toy_reward, EpisodeSpec};
pub use train::{
    toy_grpo_config, train_toy, ToyTrainConfig, ToyTrainOutcome, TOY_KL_BETA, TOY_LEARNING_RATE, TOY_LR_SCALE,
    TOY_MAX_COMPLETION,
};
pub use vocab::{Vocabulary, EOS, FILLER, HINT_CORRECT, HINT_OVERFITTING, MAX_VOCAB};
