//! Trains the toy policy with GRPO and prints per-epoch rewards.
//!
//!     cargo run --release --example grpo_toy_training -- [seed] [epochs]

use apca::grpo::DifferentiablePolicy;
use apca::toy::{train_toy, ToyTrainConfig, HINT_CORRECT, HINT_OVERFITTING};

fn main() -> apca::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs = args.next().map(|s| s.parse::<usize>().expect("epochs"));

    let mut cfg = ToyTrainConfig::default();
    cfg.grpo.seed = seed;
    if let Some(e) = epochs {
        cfg.grpo.epochs = e;
    }
    println!(
        "group {} temperature {} lr {} kl_beta {}",
        cfg.grpo.group_size, cfg.grpo.temperature, cfg.grpo.learning_rate, cfg.grpo.kl_beta
    );

    let out = train_toy(&cfg, |m, _| {
        println!(
            "epoch {:>2}  reward {:.3}  format {:.3}  accuracy {:.3}",
            m.epoch, m.mean_reward, m.mean_format_reward, m.mean_accuracy_reward
        );
        Ok(())
    })?;

    // Samples from the trained policy for each hint.
    let vocab = out.policy.vocab().clone();
    for hint in [HINT_CORRECT, HINT_OVERFITTING] {
        let prompt = vocab.encode(&[hint, "alpha"])?;
        let r = out.policy.sample(&prompt, 0.6, cfg.grpo.max_completion_tokens, 1)?;
        println!("{hint}: {}", vocab.detokenize(&r.tokens)?);
    }
    Ok(())
}
