//! Metrics, scores, assessors and the cross-validation and cross-dataset
//! protocols.

pub mod assessor;
pub mod metrics;
pub mod protocol;
pub mod score;

pub use assessor::{patch_prompt, Assessor, ConstantAssessor, OracleAssessor, Prediction, RecordsAssessor, ToyAssessor};
pub use metrics::{auc, auc_pairwise, confusion, metrics, ConfusionMatrix, Metrics};
pub use protocol::{
    config_hash, cross_dataset_run, crossval_run, evaluate, score_predictions, EvalOptions, EvalReport, FoldMean,
    FoldReport, MetricReport, Protocol, ReportMetadata, UnresolvedPolicy,
};
pub use score::{binary_score, derive_score, derive_score_from_votes, vote_score, ScoreMode};
