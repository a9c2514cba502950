//! Labeled patch datasets: loading, validation, deduplication and fold assignment.
//!
//! Dataset files are JSON Lines. Each non-blank line is an object with keys
//! `id`, `buggy`, `fixed`, `label` (`"correct"` or `"overfitting"`) and the
//! optional `origin` and `dataset_tag`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Ground-truth or predicted class of a patch. Overfitting is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Overfitting,
}

impl Verdict {
    pub const ALL: [Verdict; 2] = [Verdict::Correct, Verdict::Overfitting];

    pub fn is_positive(self) -> bool {
        self == Verdict::Overfitting
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Overfitting => "overfitting",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    /// Only the exact lowercase words are accepted.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(Verdict::Correct),
            "overfitting" => Ok(Verdict::Overfitting),
            other => Err(Error::invalid(format!(
                "label must be \"correct\" or \"overfitting\", got {other:?}"
            ))),
        }
    }
}

/// One labeled buggy/fixed code pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSample {
    pub id: String,
    #[serde(rename = "buggy")]
    pub buggy_code: String,
    #[serde(rename = "fixed")]
    pub fixed_code: String,
    pub label: Verdict,
    #[serde(default)]
    pub origin: String,
    #[serde(default)]
    pub dataset_tag: String,
}

impl PatchSample {
    pub fn new(
        id: impl Into<String>,
        buggy_code: impl Into<String>,
        fixed_code: impl Into<String>,
        label: Verdict,
    ) -> Self {
        PatchSample {
            id: id.into(),
            buggy_code: buggy_code.into(),
            fixed_code: fixed_code.into(),
            label,
            origin: String::new(),
            dataset_tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.dataset_tag = tag.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("sample id is empty"));
        }
        if self.buggy_code.is_empty() {
            return Err(Error::invalid(format!("sample `{}`: buggy code is empty", self.id)));
        }
        if self.fixed_code.is_empty() {
            return Err(Error::invalid(format!("sample `{}`: fixed code is empty", self.id)));
        }
        Ok(())
    }
}

fn required_text(obj: &serde_json::Map<String, Value>, key: &str, line: usize) -> Result<String> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(Error::Record {
            line,
            message: format!("missing field `{key}`"),
        }),
        Some(Value::String(s)) if s.is_empty() => Err(Error::Record {
            line,
            message: format!("field `{key}` is empty"),
        }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Record {
            line,
            message: format!("field `{key}` must be a string"),
        }),
    }
}

fn optional_text(obj: &serde_json::Map<String, Value>, key: &str, line: usize) -> Result<String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Record {
            line,
            message: format!("field `{key}` must be a string"),
        }),
    }
}

fn parse_record(text: &str, line: usize) -> Result<PatchSample> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Record {
        line,
        message: format!("invalid JSON: {e}"),
    })?;
    let Value::Object(obj) = value else {
        return Err(Error::Record {
            line,
            message: "record is not a JSON object".into(),
        });
    };
    let id = required_text(&obj, "id", line)?;
    let buggy_code = required_text(&obj, "buggy", line)?;
    let fixed_code = required_text(&obj, "fixed", line)?;
    let label = required_text(&obj, "label", line)?
        .parse::<Verdict>()
        .map_err(|e| Error::Record {
            line,
            message: format!("field `label`: {e}"),
        })?;
    Ok(PatchSample {
        id,
        buggy_code,
        fixed_code,
        label,
        origin: optional_text(&obj, "origin", line)?,
        dataset_tag: optional_text(&obj, "dataset_tag", line)?,
    })
}

/// Parses JSON Lines dataset text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<PatchSample>> {
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let sample = parse_record(raw, line)?;
        if seen.insert(sample.id.clone(), line).is_some() {
            return Err(Error::DuplicateId {
                id: sample.id,
                line,
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PatchSample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Serializes samples back into the JSON Lines dataset format.
pub fn to_jsonl(samples: &[PatchSample]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

/// Canonical form used for duplicate detection: LF line endings, trailing
/// whitespace removed from every line, trailing blank lines dropped.
pub fn normalize_code(code: &str) -> String {
    let unified = code.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = unified
        .split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n");
    let kept = out.trim_end_matches('\n').len();
    out.truncate(kept);
    out
}

/// Drops samples whose normalized code pair was already seen. First occurrence wins.
pub fn deduplicate(samples: &[PatchSample]) -> Vec<PatchSample> {
    let mut seen = HashSet::new();
    samples
        .iter()
        .filter(|s| seen.insert((normalize_code(&s.buggy_code), normalize_code(&s.fixed_code))))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub correct: usize,
    pub overfitting: usize,
    pub total: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.correct, self.overfitting, self.total)
    }
}

pub fn dataset_stats(samples: &[PatchSample]) -> DatasetStats {
    let overfitting = samples.iter().filter(|s| s.label.is_positive()).count();
    DatasetStats {
        correct: samples.len() - overfitting,
        overfitting,
        total: samples.len(),
    }
}

/// Mapping from sample id to fold index in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    #[serde(rename = "folds")]
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Ids in fold `fold`, in the order they appear in `order`.
    pub fn members<'a>(&self, order: &'a [PatchSample], fold: usize) -> Vec<&'a PatchSample> {
        order
            .iter()
            .filter(|s| self.fold_of(&s.id) == Some(fold))
            .collect()
    }

    /// Checks that the assignment covers exactly `ids` and that sizes are balanced.
    pub fn validate_against<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let ids: HashSet<&str> = ids.into_iter().collect();
        let assigned: HashSet<&str> = self.assignment.keys().map(String::as_str).collect();
        let mut diff: Vec<String> = ids
            .symmetric_difference(&assigned)
            .map(|s| s.to_string())
            .collect();
        if !diff.is_empty() {
            diff.sort();
            return Err(Error::IdMismatch(diff));
        }
        if let Some(&bad) = self.assignment.values().find(|&&f| f >= self.k) {
            return Err(Error::invalid(format!("fold index {bad} out of range for k = {}", self.k)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let folds: FoldAssignment = serde_json::from_str(text)?;
        if folds.k < 2 {
            return Err(Error::invalid(format!("fold file has k = {}", folds.k)));
        }
        Ok(folds)
    }
}

/// Seeded Durstenfeld shuffle on a ChaCha8 stream (`ChaCha8Rng::seed_from_u64`).
/// Walks from the last index down, swapping with `gen_range(0..=i)`.
fn seeded_shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

fn check_split_args(count: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if count < k {
        return Err(Error::invalid(format!(
            "cannot split {count} ids into {k} folds"
        )));
    }
    Ok(())
}

/// Shuffles ids with the seeded PRNG and deals them round-robin into `k` folds.
pub fn kfold_split<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldAssignment> {
    check_split_args(ids.len(), k)?;
    let mut order: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    let distinct: HashSet<&str> = order.iter().copied().collect();
    if distinct.len() != order.len() {
        return Err(Error::invalid("ids passed to kfold_split are not distinct"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    seeded_shuffle(&mut order, &mut rng);
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(pos, id)| (id.to_string(), pos % k))
        .collect();
    Ok(FoldAssignment { k, seed, assignment })
}

/// Label-stratified variant: each class is shuffled separately, then all
/// ids are dealt round-robin with correct ids first, so both the class
/// balance and the overall fold sizes stay within one of each other.
pub fn kfold_split_stratified(samples: &[PatchSample], k: usize, seed: u64) -> Result<FoldAssignment> {
    check_split_args(samples.len(), k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dealt = Vec::with_capacity(samples.len());
    for class in Verdict::ALL {
        let mut ids: Vec<&str> = samples
            .iter()
            .filter(|s| s.label == class)
            .map(|s| s.id.as_str())
            .collect();
        seeded_shuffle(&mut ids, &mut rng);
        dealt.extend(ids);
    }
    let mut assignment = BTreeMap::new();
    for (pos, id) in dealt.into_iter().enumerate() {
        if assignment.insert(id.to_string(), pos % k).is_some() {
            return Err(Error::invalid(format!("duplicate id `{id}`")));
        }
    }
    Ok(FoldAssignment { k, seed, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, label: &str) -> String {
        format!(r#"{{"id":"{id}","buggy":"a = 1;","fixed":"a = 2;","label":"{label}"}}"#)
    }

    #[test]
    fn missing_fixed_reports_line() {
        let text = format!(
            "{}\n{}\n",
            line("a", "correct"),
            r#"{"id":"b","buggy":"x","label":"correct"}"#
        );
        match parse_dataset(&text) {
            Err(Error::Record { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("fixed"), "{message}");
            }
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn uppercase_label_rejected() {
        let text = line("a", "Correct");
        assert!(matches!(parse_dataset(&text), Err(Error::Record { line: 1, .. })));
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = format!("{}\n\n{}\n", line("a", "correct"), line("a", "overfitting"));
        assert!(matches!(parse_dataset(&text), Err(Error::DuplicateId { line: 3, .. })));
    }

    #[test]
    fn optional_fields_default_to_empty() {
        let s = &parse_dataset(&line("a", "overfitting")).unwrap()[0];
        assert_eq!(s.origin, "");
        assert_eq!(s.dataset_tag, "");
        assert_eq!(s.label, Verdict::Overfitting);
    }

    #[test]
    fn dedup_ignores_trailing_whitespace_and_crlf() {
        let a = PatchSample::new("a", "if (x) {\r\n  y();\r\n}", "return x;", Verdict::Correct);
        let b = PatchSample::new("b", "if (x) {\n  y();   \n}\n", "return x;  \n", Verdict::Overfitting);
        let c = PatchSample::new("c", "if (x) {\n  y();\n}", "return  x;", Verdict::Correct);
        let kept = deduplicate(&[a, b, c]);
        let ids: Vec<_> = kept.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
    }

    #[test]
    fn dedup_keeps_leading_whitespace_distinct() {
        let a = PatchSample::new("a", "x", "  y", Verdict::Correct);
        let b = PatchSample::new("b", "x", "y", Verdict::Correct);
        assert_eq!(deduplicate(&[a, b]).len(), 2);
    }

    #[test]
    fn split_rejects_bad_k() {
        let ids = ["a", "b", "c"];
        assert!(kfold_split(&ids, 1, 0).is_err());
        assert!(kfold_split(&ids, 4, 0).is_err());
        assert!(kfold_split(&["a", "a"], 2, 0).is_err());
    }

    #[test]
    fn stratified_split_balances_classes() {
        let samples: Vec<_> = (0..53)
            .map(|i| PatchSample::new(format!("c{i}"), "a", "b", Verdict::Correct))
            .chain((0..65).map(|i| PatchSample::new(format!("o{i}"), "a", "b", Verdict::Overfitting)))
            .collect();
        let folds = kfold_split_stratified(&samples, 5, 7).unwrap();
        let sizes = folds.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 118);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..5 {
            let pos = folds
                .members(&samples, f)
                .iter()
                .filter(|s| s.label.is_positive())
                .count();
            assert!((12..=14).contains(&pos), "fold {f} has {pos} positives");
        }
    }

    #[test]
    fn fold_json_shape() {
        let folds = kfold_split(&["x", "y"], 2, 3).unwrap();
        let v: Value = serde_json::from_str(&folds.to_json().unwrap()).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["seed"], 3);
        assert!(v["folds"]["x"].is_u64());
    }
}
