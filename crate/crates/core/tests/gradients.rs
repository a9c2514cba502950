mod common;

use apca::grpo::{DifferentiablePolicy, GrpoConfig};
use apca::toy::{softmax, PolicyShape, ToyPolicy, Vocabulary};
use common::{worst_relative_error, REL_TOL};

#[test]
fn loss_gradient_matches_central_differences() {
    let cfg = GrpoConfig {
        group_size: 6,
        max_completion_tokens: 6,
        temperature: 1.0,
        kl_beta: 0.1,
        ..GrpoConfig::default()
    };
    let worst = worst_relative_error(&cfg);
    assert!(worst <= REL_TOL, "worst relative error {worst:e}");
}

#[test]
fn unnormalized_loss_gradient_matches_too() {
    let cfg = GrpoConfig {
        group_size: 4,
        max_completion_tokens: 5,
        temperature: 1.0,
        kl_beta: 0.0,
        length_normalize: false,
        ..GrpoConfig::default()
    };
    let worst = worst_relative_error(&cfg);
    assert!(worst <= REL_TOL, "worst relative error {worst:e}");
}

#[test]
fn sampler_frequencies_match_the_tempered_softmax() {
    let vocab = Vocabulary::new(["<eos>", "a", "b", "c"].map(String::from).to_vec()).unwrap();
    let shape = PolicyShape {
        window: 2,
        embed_dim: 3,
        hidden: 4,
    };
    let policy = ToyPolicy::init(9, vocab, shape).unwrap();
    let prompt = [1usize, 2];
    let t = 0.7;
    let logits = policy.next_logits(&prompt).unwrap();
    let probs = softmax(&logits.iter().map(|z| z / t).collect::<Vec<_>>());
    let n = 20_000;
    let mut counts = [0usize; 4];
    for seed in 0..n {
        let r = policy.sample(&prompt, t, 1, seed).unwrap();
        counts[r.tokens[0]] += 1;
    }
    for (c, p) in counts.iter().zip(&probs) {
        let freq = *c as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 4.0 * sigma + 1e-9, "freq {freq} vs p {p}");
    }
}
