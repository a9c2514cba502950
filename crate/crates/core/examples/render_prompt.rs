//! Renders the assessment prompt for one patch.
//!
//!     cargo run --example render_prompt

use apca::prompt::{build_prompt, default_template};
use apca::{PatchSample, Verdict};

fn main() {
    let sample = PatchSample::new(
        "demo-1",
        "int abs(int x) {\n    return x;\n}\n",
        "int abs(int x) {\n    if (x == -1) return 1;\n    return x;\n}\n",
        Verdict::Overfitting,
    );
    let template = default_template();
    let prompt = build_prompt(&sample, &template);
    println!("template: {}", template.id);
    println!("{}", prompt.text);
}
