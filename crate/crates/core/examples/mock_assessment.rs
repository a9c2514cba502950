//! Assesses the 10-patch fixture against the scripted mock endpoint and
//! scores the records.

use apca::client::{assess_batch, EndpointClient, EndpointConfig, MockScript, MockServer};
use apca::corpus::load_dataset;
use apca::eval::{evaluate, EvalOptions, RecordsAssessor};
use apca::prompt::default_template;

fn main() -> apca::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let samples = load_dataset(format!("{dir}/patches10.jsonl"))?;
    let server = MockServer::start(MockScript::load(format!("{dir}/mock10.json"))?, 0)?;

    let mut cfg = EndpointConfig::new(server.base_url(), "mock");
    cfg.retry_backoff_ms = 10;
    let client = EndpointClient::new(cfg)?;
    let records = assess_batch(&client, &samples, &default_template(), 4)?;
    for r in &records {
        println!(
            "{}  attempts {}  verdict {:<17} unresolved {}",
            r.sample_id,
            r.attempts,
            format!("{:?}", r.verdict),
            r.unresolved
        );
    }

    let report = evaluate(&samples, &RecordsAssessor::new(records), &EvalOptions::default())?;
    let m = &report.overall;
    println!(
        "acc {:.3} prec {:.3} rec {:.3} f1 {:.3} auc {:?}",
        m.accuracy, m.precision, m.recall, m.f1, m.auc
    );
    Ok(())
}
