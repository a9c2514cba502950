//! Evaluation protocols and the report they produce.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{FoldAssignment, PatchSample, Verdict};
use crate::error::{Error, Result};
use crate::eval::assessor::{Assessor, Prediction};
use crate::eval::metrics::{auc, confusion, metrics, ConfusionMatrix};
use crate::eval::score::ScoreMode;

/// What happens to samples without a verdict.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnresolvedPolicy {
    /// Count them as Overfitting, which sends the patch to human review.
    #[default]
    PredictOverfitting,
    /// Drop them from every metric. They are still counted.
    Exclude,
}

impl fmt::Display for UnresolvedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnresolvedPolicy::PredictOverfitting => "predict-overfitting",
            UnresolvedPolicy::Exclude => "exclude",
        })
    }
}

impl FromStr for UnresolvedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predict-overfitting" => Ok(UnresolvedPolicy::PredictOverfitting),
            "exclude" => Ok(UnresolvedPolicy::Exclude),
            _ => Err(Error::invalid(format!(
                "unresolved policy `{s}` is not `predict-overfitting` or `exclude`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub score_mode: ScoreMode,
    pub unresolved_policy: UnresolvedPolicy,
}

/// Metrics over one set of predictions. `auc` is null when the scored set
/// holds a single gold class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub unresolved_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

/// Unweighted mean of the per-fold metrics. `auc` averages the folds where it
/// is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMean {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Protocol {
    Single,
    CrossValidation { k: usize, seed: u64 },
    CrossDataset { train_tags: Vec<String>, test_tags: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub template_id: Option<String>,
    /// sha256 of the compact JSON run configuration.
    pub config_hash: Option<String>,
    pub dataset_tags: Vec<String>,
    /// Top-level seed of the run.
    pub seed: Option<u64>,
    /// RFC 3339, set by [`ReportMetadata::describe_run`].
    pub generated_at: Option<String>,
}

impl ReportMetadata {
    pub fn describe_run(&mut self, template_id: Option<&str>, seed: Option<u64>, config: &impl Serialize) -> Result<()> {
        self.template_id = template_id.map(str::to_string);
        self.seed = seed;
        self.config_hash = Some(config_hash(config)?);
        self.generated_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
        Ok(())
    }
}

pub fn config_hash(config: &impl Serialize) -> Result<String> {
    // Through Value so map keys come out sorted.
    let canonical = serde_json::to_string(&serde_json::to_value(config)?)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Top-level metrics are over pooled predictions (`pooled` is true).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub assessor: String,
    pub score_mode: ScoreMode,
    pub unresolved_policy: UnresolvedPolicy,
    pub pooled: bool,
    #[serde(flatten)]
    pub overall: MetricReport,
    pub fold_mean: Option<FoldMean>,
    pub per_fold: Option<Vec<FoldReport>>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn golds_of(samples: &[PatchSample]) -> Vec<(String, Verdict)> {
    samples.iter().map(|s| (s.id.clone(), s.label)).collect()
}

/// Applies the unresolved policy, then computes every metric.
pub fn score_predictions(
    predictions: &[Prediction],
    golds: &[(String, Verdict)],
    policy: UnresolvedPolicy,
) -> Result<MetricReport> {
    let unresolved: BTreeSet<&str> = predictions
        .iter()
        .filter(|p| p.verdict.is_none())
        .map(|p| p.sample_id.as_str())
        .collect();
    let keep = |id: &str| policy == UnresolvedPolicy::PredictOverfitting || !unresolved.contains(id);
    let (mut verdicts, mut scores) = (Vec::new(), Vec::new());
    for p in predictions.iter().filter(|p| keep(&p.sample_id)) {
        verdicts.push((p.sample_id.clone(), p.verdict.unwrap_or(Verdict::Overfitting)));
        scores.push((p.sample_id.clone(), p.score));
    }
    let golds: Vec<(String, Verdict)> = golds.iter().filter(|(id, _)| keep(id)).cloned().collect();
    let cm = confusion(&verdicts, &golds)?;
    let m = metrics(&cm)?;
    let auc = match auc(&scores, &golds) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        n: verdicts.len(),
        confusion: cm,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        auc,
        unresolved_count: unresolved.len(),
    })
}

fn fold_mean(folds: &[FoldReport]) -> FoldMean {
    let n = folds.len() as f64;
    let avg = |f: fn(&MetricReport) -> f64| folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    let aucs: Vec<f64> = folds.iter().filter_map(|r| r.metrics.auc).collect();
    FoldMean {
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
    }
}

fn dataset_tags<'a>(samples: impl IntoIterator<Item = &'a PatchSample>) -> Vec<String> {
    let tags: BTreeSet<&str> = samples
        .into_iter()
        .map(|s| s.dataset_tag.as_str())
        .filter(|t| !t.is_empty())
        .collect();
    tags.into_iter().map(str::to_string).collect()
}

/// Scores a fixed assessor on `samples` with no training.
pub fn evaluate(samples: &[PatchSample], assessor: &dyn Assessor, opts: &EvalOptions) -> Result<EvalReport> {
    let preds = assessor.assess(samples, opts.score_mode)?;
    let overall = score_predictions(&preds, &golds_of(samples), opts.unresolved_policy)?;
    Ok(EvalReport {
        protocol: Protocol::Single,
        assessor: assessor.name(),
        score_mode: opts.score_mode,
        unresolved_policy: opts.unresolved_policy,
        pooled: true,
        overall,
        fold_mean: None,
        per_fold: None,
        metadata: ReportMetadata {
            dataset_tags: dataset_tags(samples),
            ..Default::default()
        },
    })
}

/// k-fold cross-validation. Fold `f` is assessed after fitting on the other
/// folds. Reports per-fold metrics, their mean, and metrics over the pooled
/// predictions. Errors carry the fold index.
pub fn crossval_run(
    dataset: &[PatchSample],
    folds: &FoldAssignment,
    assessor: &mut dyn Assessor,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    folds.validate_against(dataset.iter().map(|s| s.id.as_str()))?;
    let mut per_fold = Vec::with_capacity(folds.k);
    let mut pooled_preds = Vec::with_capacity(dataset.len());
    let mut pooled_golds = Vec::with_capacity(dataset.len());
    for f in 0..folds.k {
        let wrap = |e: Error| Error::Fold {
            fold: f,
            source: Box::new(e),
        };
        let (test, train): (Vec<PatchSample>, Vec<PatchSample>) =
            dataset.iter().cloned().partition(|s| folds.fold_of(&s.id) == Some(f));
        if test.is_empty() {
            return Err(wrap(Error::invalid("fold has no samples")));
        }
        assessor.fit(&train).map_err(wrap)?;
        let preds = assessor.assess(&test, opts.score_mode).map_err(wrap)?;
        let golds = golds_of(&test);
        let metrics = score_predictions(&preds, &golds, opts.unresolved_policy).map_err(wrap)?;
        tracing::info!(fold = f, accuracy = metrics.accuracy, "fold evaluated");
        per_fold.push(FoldReport { fold: f, metrics });
        pooled_preds.extend(preds);
        pooled_golds.extend(golds);
    }
    let overall = score_predictions(&pooled_preds, &pooled_golds, opts.unresolved_policy)?;
    debug_assert_eq!(
        overall.confusion,
        per_fold.iter().map(|r| r.metrics.confusion).sum::<ConfusionMatrix>()
    );
    Ok(EvalReport {
        protocol: Protocol::CrossValidation {
            k: folds.k,
            seed: folds.seed,
        },
        assessor: assessor.name(),
        score_mode: opts.score_mode,
        unresolved_policy: opts.unresolved_policy,
        pooled: true,
        overall,
        fold_mean: Some(fold_mean(&per_fold)),
        per_fold: Some(per_fold),
        metadata: ReportMetadata {
            dataset_tags: dataset_tags(dataset),
            ..Default::default()
        },
    })
}

/// Fits on `train_set` only and reports on `test_set`. The sets must share no
/// sample id and no non-empty dataset tag.
pub fn cross_dataset_run(
    train_set: &[PatchSample],
    test_set: &[PatchSample],
    assessor: &mut dyn Assessor,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let train_ids: BTreeSet<&str> = train_set.iter().map(|s| s.id.as_str()).collect();
    let overlap: Vec<&str> = test_set
        .iter()
        .map(|s| s.id.as_str())
        .filter(|id| train_ids.contains(id))
        .collect();
    if !overlap.is_empty() {
        return Err(Error::invalid(format!(
            "train and test sets share {} sample ids: {}",
            overlap.len(),
            overlap.join(", ")
        )));
    }
    let (train_tags, test_tags) = (dataset_tags(train_set), dataset_tags(test_set));
    if let Some(t) = train_tags.iter().find(|t| test_tags.contains(t)) {
        return Err(Error::invalid(format!("dataset tag `{t}` appears in both train and test sets")));
    }
    assessor.fit(train_set)?;
    let preds = assessor.assess(test_set, opts.score_mode)?;
    let overall = score_predictions(&preds, &golds_of(test_set), opts.unresolved_policy)?;
    Ok(EvalReport {
        protocol: Protocol::CrossDataset {
            train_tags,
            test_tags: test_tags.clone(),
        },
        assessor: assessor.name(),
        score_mode: opts.score_mode,
        unresolved_policy: opts.unresolved_policy,
        pooled: true,
        overall,
        fold_mean: None,
        per_fold: None,
        metadata: ReportMetadata {
            dataset_tags: test_tags,
            ..Default::default()
        },
    })
}
