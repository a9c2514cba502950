//! Parses a few model outputs and scores them against a gold verdict.

use apca::parser::parse;
use apca::rewards::total_reward;
use apca::Verdict;

fn main() {
    let outputs = [
        "<think>The guard only covers the input used by the test.</think>\n<answer>overfitting</answer>",
        "<think>Handles every negative input.</think><answer>The patch is correct.</answer>",
        "<think>unsure</think><answer>correct or wrong</answer>",
        "<answer>incorrect</answer>",
        "plain text with no tags",
    ];
    for raw in outputs {
        let p = parse(raw);
        let r = total_reward(&p, Verdict::Overfitting);
        println!(
            "verdict {:<17} well-formed {:<5} ambiguous {:<5} format {:.2} accuracy {:.1} total {:.2}",
            format!("{:?}", p.verdict),
            p.is_wellformed(),
            p.ambiguous,
            r.format_reward,
            r.accuracy_reward,
            r.total
        );
    }
}
