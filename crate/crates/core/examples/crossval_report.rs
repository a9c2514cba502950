//! 5-fold cross-validation of the trainable toy assessor on the fixture
//! corpus, followed by a cross-dataset run of the oracle.

use apca::corpus::{kfold_split, load_dataset};
use apca::eval::{cross_dataset_run, crossval_run, EvalOptions, OracleAssessor, ToyAssessor};
use apca::toy::{toy_grpo_config, PolicyShape};

fn main() -> apca::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let data = load_dataset(format!("{dir}/patches118.jsonl"))?;
    let ids: Vec<&str> = data.iter().map(|s| s.id.as_str()).collect();
    let folds = kfold_split(&ids, 5, 0)?;

    let mut cfg = toy_grpo_config(0);
    cfg.epochs = 2;
    let mut toy = ToyAssessor::new(cfg, PolicyShape::default())?;
    let report = crossval_run(&data, &folds, &mut toy, &EvalOptions::default())?;
    for f in report.per_fold.iter().flatten() {
        println!("fold {} acc {:.3} f1 {:.3}", f.fold, f.metrics.accuracy, f.metrics.f1);
    }
    println!("pooled acc {:.3} f1 {:.3} auc {:?}", report.overall.accuracy, report.overall.f1, report.overall.auc);

    // The toy assessor never sees code semantics, so expect chance-level
    // scores above. The oracle shows the cross-dataset report shape.
    let test = load_dataset(format!("{dir}/patches10.jsonl"))?;
    let report = cross_dataset_run(&data, &test, &mut OracleAssessor, &EvalOptions::default())?;
    println!("{}", report.to_json()?);
    Ok(())
}
