//! Splits a dataset into seeded folds, plain and stratified.

use std::path::Path;

use apca::corpus::{dataset_stats, kfold_split, kfold_split_stratified, load_dataset};

fn main() -> apca::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/patches118.jsonl").into());
    let samples = load_dataset(Path::new(&path))?;
    println!("correct overfitting total: {}", dataset_stats(&samples));

    let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let plain = kfold_split(&ids, 5, 0)?;
    println!("plain fold sizes {:?}", plain.fold_sizes());

    let strat = kfold_split_stratified(&samples, 5, 0)?;
    for fold in 0..strat.k {
        let overfitting = samples
            .iter()
            .filter(|s| strat.fold_of(&s.id) == Some(fold) && s.label.is_positive())
            .count();
        let size = strat.fold_sizes()[fold];
        println!("stratified fold {fold}: {size} samples, {overfitting} overfitting");
    }
    Ok(())
}
