//! Labeled text datasets: JSONL ingestion, label normalization, class
//! balancing, premise/hypothesis joining and annotation-disagreement entropy.
//!
//! The wire format is one JSON object per line. Single-text records carry
//! `text`, pair records carry `premise` + `hypothesis`; exactly one of the
//! two forms must be present:
//!
//! ```text
//! {"id": "s1", "text": "...", "label": "Positive", "split": "train"}
//! {"id": "p1", "premise": "...", "hypothesis": "...", "label": "Neutral",
//!  "split": "test", "annotations": {"Entailment": 1, "Neutral": 3}}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six conjunctions used to join premise/hypothesis pairs into a single
/// sentence before encoding.
pub const DEFAULT_CONJUNCTIONS: [&str; 6] =
    ["Maybe", "And", "Therefore", "But", "On the other hand", "It is true that"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    MalformedJson { line: usize, source: serde_json::Error },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: record must carry exactly one of `text` or `premise`+`hypothesis`")]
    ContentMismatch { line: usize },
    #[error("line {line}: content kind does not match schema task kind")]
    TaskKindMismatch { line: usize },
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("duplicate id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: empty id")]
    EmptyId { line: usize },
    #[error("line {line}: annotation counts must sum to at least 1")]
    BadAnnotations { line: usize },
    #[error("invalid label schema: {0}")]
    SchemaInvalid(String),
    #[error("label `{0}` has no entry in the normalization mapping")]
    UnmappedLabel(String),
    #[error("mapping target `{target}` (from `{source_label}`) is not in the target schema")]
    MappingTargetOutsideSchema { source_label: String, target: String },
    #[error("class `{class}` has no instances in {scope}")]
    EmptyClass { class: String, scope: String },
    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("premise and hypothesis must be non-empty")]
    EmptySegment,
    #[error("class `{class}` has no annotated instances")]
    NoAnnotatedInstances { class: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleText,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Validation => write!(f, "validation"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Instance payload: a single text, or a premise/hypothesis pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Content {
    SingleText(String),
    Pair { premise: String, hypothesis: String },
}

impl Content {
    pub fn kind(&self) -> TaskKind {
        match self {
            Content::SingleText(_) => TaskKind::SingleText,
            Content::Pair { .. } => TaskKind::Pair,
        }
    }

    /// The encodable text: the single text itself, or the pair joined with
    /// `conjunction` (required for pair content).
    pub fn render(&self, conjunction: Option<&str>) -> Result<String, DatasetError> {
        match self {
            Content::SingleText(t) => Ok(t.clone()),
            Content::Pair { premise, hypothesis } => {
                join_pair(premise, hypothesis, conjunction.unwrap_or(DEFAULT_CONJUNCTIONS[0]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub content: Content,
    pub label: String,
    pub split: Split,
    /// Raw annotator counts per label; normalized only at computation time so
    /// varying annotator pool sizes stay representable.
    pub annotations: Option<BTreeMap<String, u64>>,
}

/// Ordered class list; the ordering is stable and defines reporting order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    classes: Vec<String>,
    task_kind: TaskKind,
}

impl LabelSchema {
    pub fn new<S: Into<String>>(
        classes: impl IntoIterator<Item = S>,
        task_kind: TaskKind,
    ) -> Result<Self, DatasetError> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.len() < 2 {
            return Err(DatasetError::SchemaInvalid(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if c.is_empty() {
                return Err(DatasetError::SchemaInvalid("empty class name".into()));
            }
            if !seen.insert(c.clone()) {
                return Err(DatasetError::SchemaInvalid(format!("duplicate class `{c}`")));
            }
        }
        Ok(Self { classes, task_kind })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.classes.iter().any(|c| c == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: LabelSchema,
    instances: Vec<Instance>,
}

impl Dataset {
    /// Validates every instance against the schema (labels, id uniqueness,
    /// content kind, annotation totals).
    pub fn new(schema: LabelSchema, instances: Vec<Instance>) -> Result<Self, DatasetError> {
        let mut ids = HashSet::new();
        for (i, inst) in instances.iter().enumerate() {
            let line = i + 1;
            validate_instance(inst, &schema, line)?;
            if !ids.insert(inst.id.clone()) {
                return Err(DatasetError::DuplicateId { id: inst.id.clone(), line });
            }
        }
        Ok(Self { schema, instances })
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Indices of instances in `split`, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.instances.len()).filter(|&i| self.instances[i].split == split).collect()
    }

    /// Per-class instance counts, optionally restricted to one split, in
    /// schema order.
    pub fn class_counts(&self, split: Option<Split>) -> Vec<usize> {
        let mut counts = vec![0usize; self.schema.len()];
        for inst in &self.instances {
            if split.is_none_or(|s| inst.split == s) {
                counts[self.schema.index_of(&inst.label).expect("validated label")] += 1;
            }
        }
        counts
    }
}

fn validate_instance(
    inst: &Instance,
    schema: &LabelSchema,
    line: usize,
) -> Result<(), DatasetError> {
    if inst.id.is_empty() {
        return Err(DatasetError::EmptyId { line });
    }
    if inst.content.kind() != schema.task_kind() {
        return Err(DatasetError::TaskKindMismatch { line });
    }
    if !schema.contains(&inst.label) {
        return Err(DatasetError::UnknownLabel { line, label: inst.label.clone() });
    }
    if let Some(ann) = &inst.annotations {
        if ann.values().sum::<u64>() < 1 {
            return Err(DatasetError::BadAnnotations { line });
        }
    }
    Ok(())
}

/// One dataset JSONL record on the wire.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    premise: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hypothesis: Option<String>,
    label: String,
    split: Split,
    #[serde(skip_serializing_if = "Option::is_none")]
    annotations: Option<BTreeMap<String, u64>>,
}

impl RawRecord {
    fn into_instance(self, line: usize) -> Result<Instance, DatasetError> {
        let content = match (self.text, self.premise, self.hypothesis) {
            (Some(t), None, None) => Content::SingleText(t),
            (None, Some(p), Some(h)) => Content::Pair { premise: p, hypothesis: h },
            (None, Some(_), None) => {
                return Err(DatasetError::MissingField { line, field: "hypothesis" });
            }
            (None, None, Some(_)) => {
                return Err(DatasetError::MissingField { line, field: "premise" });
            }
            _ => return Err(DatasetError::ContentMismatch { line }),
        };
        Ok(Instance {
            id: self.id,
            content,
            label: self.label,
            split: self.split,
            annotations: self.annotations,
        })
    }

    fn from_instance(inst: &Instance) -> Self {
        let (text, premise, hypothesis) = match &inst.content {
            Content::SingleText(t) => (Some(t.clone()), None, None),
            Content::Pair { premise, hypothesis } => {
                (None, Some(premise.clone()), Some(hypothesis.clone()))
            }
        };
        RawRecord {
            id: inst.id.clone(),
            text,
            premise,
            hypothesis,
            label: inst.label.clone(),
            split: inst.split,
            annotations: inst.annotations.clone(),
        }
    }
}

/// Loads a JSONL dataset, validating every record against `schema`. Errors
/// carry 1-based line numbers. Blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Dataset, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut instances = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|source| DatasetError::MalformedJson { line: line_no, source })?;
        let inst = raw.into_instance(line_no)?;
        validate_instance(&inst, schema, line_no)?;
        if !ids.insert(inst.id.clone()) {
            return Err(DatasetError::DuplicateId { id: inst.id, line: line_no });
        }
        instances.push(inst);
    }
    Ok(Dataset { schema: schema.clone(), instances })
}

/// Writes a dataset back out as JSONL (UTF-8, LF line endings).
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for inst in dataset.instances() {
        serde_json::to_writer(&mut out, &RawRecord::from_instance(inst))
            .expect("record serialization cannot fail");
        out.push(b'\n');
    }
    let mut f = File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Relabels every instance through `mapping` into `target_schema`. Instance
/// count and ids are preserved. Annotation keys present in the mapping are
/// remapped too (merged counts are summed); unmapped annotation keys pass
/// through untouched.
pub fn normalize_labels(
    dataset: &Dataset,
    mapping: &BTreeMap<String, String>,
    target_schema: &LabelSchema,
) -> Result<Dataset, DatasetError> {
    for (source, target) in mapping {
        if !target_schema.contains(target) {
            return Err(DatasetError::MappingTargetOutsideSchema {
                source_label: source.clone(),
                target: target.clone(),
            });
        }
    }
    let mut instances = Vec::with_capacity(dataset.len());
    for inst in dataset.instances() {
        let label = mapping
            .get(&inst.label)
            .ok_or_else(|| DatasetError::UnmappedLabel(inst.label.clone()))?
            .clone();
        let annotations = inst.annotations.as_ref().map(|ann| {
            let mut merged: BTreeMap<String, u64> = BTreeMap::new();
            for (k, v) in ann {
                let key = mapping.get(k).cloned().unwrap_or_else(|| k.clone());
                *merged.entry(key).or_insert(0) += v;
            }
            merged
        });
        instances.push(Instance {
            id: inst.id.clone(),
            content: inst.content.clone(),
            label,
            split: inst.split,
            annotations,
        });
    }
    Dataset::new(target_schema.clone(), instances)
}

/// Downsamples so every class has the same number of instances:
/// `max(1, floor(fraction * min-class-count))`, computed per split when
/// `per_split` is set, over the whole dataset otherwise. Sampling is without
/// replacement from a seeded permutation; selected instances keep their
/// original relative order, so re-balancing with `fraction = 1.0` is a
/// no-op on already-balanced data.
pub fn balance_classes(
    dataset: &Dataset,
    seed: u64,
    fraction: f64,
    per_split: bool,
) -> Result<Dataset, DatasetError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let schema = dataset.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; dataset.len()];

    let scopes: Vec<(Option<Split>, String)> = if per_split {
        Split::ALL
            .iter()
            .filter(|s| dataset.instances().iter().any(|i| i.split == **s))
            .map(|s| (Some(*s), format!("split `{s}`")))
            .collect()
    } else {
        vec![(None, "the dataset".to_string())]
    };

    for (split, scope) in scopes {
        // indices per class, dataset order
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); schema.len()];
        for (i, inst) in dataset.instances().iter().enumerate() {
            if split.is_none_or(|s| inst.split == s) {
                per_class[schema.index_of(&inst.label).expect("validated")].push(i);
            }
        }
        let min_count = per_class.iter().map(Vec::len).min().unwrap_or(0);
        if min_count == 0 {
            let class = schema.classes()
                [per_class.iter().position(|c| c.is_empty()).expect("some class empty")]
            .clone();
            return Err(DatasetError::EmptyClass { class, scope });
        }
        let take = ((fraction * min_count as f64).floor() as usize).max(1);
        for indices in &mut per_class {
            indices.shuffle(&mut rng);
            for &i in indices.iter().take(take) {
                keep[i] = true;
            }
        }
    }

    let instances: Vec<Instance> = dataset
        .instances()
        .iter()
        .enumerate()
        .filter_map(|(i, inst)| keep[i].then(|| inst.clone()))
        .collect();
    Ok(Dataset { schema: schema.clone(), instances })
}

/// Joins a premise/hypothesis pair into `"<premise> <conjunction> <hypothesis>"`,
/// inputs verbatim. The conventional conjunction set is
/// [`DEFAULT_CONJUNCTIONS`]; callers may pass anything else.
pub fn join_pair(
    premise: &str,
    hypothesis: &str,
    conjunction: &str,
) -> Result<String, DatasetError> {
    if premise.is_empty() || hypothesis.is_empty() {
        return Err(DatasetError::EmptySegment);
    }
    Ok(format!("{premise} {conjunction} {hypothesis}"))
}

/// Per-class mean annotation entropy, plus the count of instances skipped
/// for lacking annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationEntropy {
    /// Classes in schema order.
    pub classes: Vec<String>,
    /// Mean Shannon entropy (nats) of the normalized annotation distribution
    /// of instances in each class.
    pub entropy: Vec<f64>,
    /// Instances that carried no annotations and were excluded.
    pub skipped_instances: usize,
}

/// Mean entropy (natural log) of the normalized annotation distribution per
/// class. Instances without annotations are excluded and counted.
pub fn annotation_entropy(dataset: &Dataset) -> Result<AnnotationEntropy, DatasetError> {
    let schema = dataset.schema();
    let mut sums = vec![0.0f64; schema.len()];
    let mut counts = vec![0usize; schema.len()];
    let mut skipped = 0usize;
    for inst in dataset.instances() {
        let Some(ann) = &inst.annotations else {
            skipped += 1;
            continue;
        };
        let total: u64 = ann.values().sum();
        debug_assert!(total >= 1, "validated at construction");
        let h: f64 = ann
            .values()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total as f64;
                -p * p.ln()
            })
            .sum();
        let k = schema.index_of(&inst.label).expect("validated");
        sums[k] += h;
        counts[k] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(DatasetError::NoAnnotatedInstances { class: schema.classes()[k].clone() });
        }
    }
    let entropy =
        sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    Ok(AnnotationEntropy { classes: schema.classes().to_vec(), entropy, skipped_instances: skipped })
}
