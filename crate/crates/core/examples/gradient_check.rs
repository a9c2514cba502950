//! Compares the analytic gradient of the toy policy's completion log-prob
//! with central finite differences.

use apca::grpo::DifferentiablePolicy;
use apca::toy::{PolicyShape, ToyPolicy, Vocabulary};

fn main() -> apca::Result<()> {
    let vocab = Vocabulary::standard();
    let policy = ToyPolicy::init(1, vocab.clone(), PolicyShape::default())?;
    let prompt = vocab.encode(&["HINT_O", "beta"])?;
    let completion = policy.sample(&prompt, 1.0, 6, 3)?.tokens;

    let total = |p: &ToyPolicy| -> f64 { p.token_logprobs(&prompt, &completion).unwrap().iter().sum() };
    let trace = policy.forward(&prompt, &completion)?;
    let analytic = policy.backward(&trace, &vec![1.0; completion.len()])?;

    let h = 1e-5;
    let mut probe = policy.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let w = policy.params()[i];
        probe.params_mut()[i] = w + h;
        let up = total(&probe);
        probe.params_mut()[i] = w - h;
        let down = total(&probe);
        probe.params_mut()[i] = w;
        let numeric = (up - down) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    println!("{} parameters, {} completion tokens", policy.num_params(), completion.len());
    println!("worst relative error {worst:.2e}");
    Ok(())
}
