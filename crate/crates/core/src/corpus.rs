//! Corpus data model, the on-disk format, validation and Yes/No conversion.
//!
//! On disk a corpus is a directory:
//!
//! ```text
//! corpus.json                      {"version": 1, "datasets": ["<id>", ...]}
//! datasets/<id>.meta.json          tags, eval flag, labels and their descriptions
//! datasets/<id>.examples.jsonl     one {"id", "text", "labels"} record per line
//! ```
//!
//! Loading sorts datasets by id, so the manifest order never matters.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "corpus.json";
pub const DATASETS_DIR: &str = "datasets";
pub const FORMAT_VERSION: u32 = 1;

/// Separator used when a sentence-pair source is flattened into one context.
pub const PAIR_SEPARATOR: &str = " | ";

/// Most annotated (non-synthesized) descriptions a single label may carry.
pub const MAX_ANNOTATED_DESCRIPTIONS: usize = 3;

/// Joins a sentence pair (e.g. two questions of a duplicate-detection task)
/// into a single context string.
pub fn join_pair(first: &str, second: &str) -> String {
    format!("{first}{PAIR_SEPARATOR}{second}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_bool(yes: bool) -> Self {
        if yes {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }

    /// 1.0 for Yes, 0.0 for No.
    pub fn target(self) -> f64 {
        if self.is_yes() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelDescription {
    pub id: String,
    pub label_id: String,
    pub dataset_id: String,
    pub question: String,
    /// Template-generated; used for training, never evaluated.
    pub synthesized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Label {
    pub id: String,
    pub dataset_id: String,
    pub name: String,
    /// Null labels ("no emotion", ...) carry no descriptions.
    pub null: bool,
    pub descriptions: Vec<LabelDescription>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Example {
    pub id: String,
    pub dataset_id: String,
    pub text: String,
    pub gold_labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dataset {
    pub id: String,
    pub name: String,
    /// Empty means untagged; untagged datasets are only similar to themselves.
    pub tags: BTreeSet<String>,
    pub eval_allowed: bool,
    pub labels: Vec<Label>,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn descriptions(&self) -> impl Iterator<Item = &LabelDescription> {
        self.labels.iter().flat_map(|l| l.descriptions.iter())
    }

    /// Descriptions that take part in evaluation.
    pub fn evaluable_descriptions(&self) -> impl Iterator<Item = &LabelDescription> {
        self.descriptions().filter(|d| !d.synthesized)
    }

    pub fn description(&self, id: &str) -> Option<&LabelDescription> {
        self.descriptions().find(|d| d.id == id)
    }

    pub fn label(&self, id: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.id == id)
    }

    /// Gold answer of `example` for a description of `label_id`.
    pub fn gold_answer(example: &Example, label_id: &str) -> Answer {
        Answer::from_bool(example.gold_labels.contains(label_id))
    }

    fn check(&self) -> Result<()> {
        let scope = format!("dataset {:?}", self.id);
        let mut label_ids = HashSet::new();
        let mut description_ids = HashSet::new();
        for label in &self.labels {
            if !label_ids.insert(label.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "label",
                    id: label.id.clone(),
                    scope,
                });
            }
            if label.null && !label.descriptions.is_empty() {
                return Err(Error::InvalidCorpus(format!(
                    "null label {:?} in dataset {:?} carries descriptions",
                    label.id, self.id
                )));
            }
            if !label.null && label.descriptions.is_empty() {
                return Err(Error::UndescribedLabel {
                    dataset: self.id.clone(),
                    label: label.id.clone(),
                });
            }
            let annotated = label.descriptions.iter().filter(|d| !d.synthesized).count();
            if annotated > MAX_ANNOTATED_DESCRIPTIONS {
                return Err(Error::InvalidCorpus(format!(
                    "label {:?} in dataset {:?} has {annotated} annotated descriptions (at most {MAX_ANNOTATED_DESCRIPTIONS})",
                    label.id, self.id
                )));
            }
            for d in &label.descriptions {
                if !description_ids.insert(d.id.as_str()) {
                    return Err(Error::DuplicateId {
                        kind: "description",
                        id: d.id.clone(),
                        scope,
                    });
                }
                if d.question.trim().is_empty() {
                    return Err(Error::InvalidCorpus(format!(
                        "description {:?} in dataset {:?} has an empty question",
                        d.id, self.id
                    )));
                }
            }
        }

        let mut example_ids = HashSet::new();
        for ex in &self.examples {
            if !example_ids.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "example",
                    id: ex.id.clone(),
                    scope,
                });
            }
            if let Some(missing) = ex.gold_labels.iter().find(|l| !label_ids.contains(l.as_str())) {
                return Err(Error::UnknownLabel {
                    dataset: self.id.clone(),
                    example: ex.id.clone(),
                    label: missing.clone(),
                });
            }
        }
        Ok(())
    }
}

/// An immutable, validated collection of datasets sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    datasets: Vec<Dataset>,
}

impl Corpus {
    /// Validates and sorts `datasets`.
    pub fn new(mut datasets: Vec<Dataset>) -> Result<Self> {
        datasets.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in datasets.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateId {
                    kind: "dataset",
                    id: pair[0].id.clone(),
                    scope: "corpus".into(),
                });
            }
        }
        for d in &datasets {
            d.check()?;
        }
        Ok(Corpus { datasets })
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn dataset(&self, id: &str) -> Result<&Dataset> {
        self.datasets
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .map(|i| &self.datasets[i])
            .map_err(|_| Error::UnknownDataset(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }
}

// ---------------------------------------------------------------------------
// On-disk records

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    version: u32,
    datasets: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRecord {
    id: String,
    name: String,
    tags: Vec<String>,
    eval_allowed: bool,
    labels: Vec<LabelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    id: String,
    name: String,
    #[serde(default)]
    null: bool,
    descriptions: Vec<DescriptionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptionRecord {
    id: String,
    question: String,
    #[serde(default)]
    synthesized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleRecord {
    id: String,
    text: String,
    labels: Vec<String>,
}

fn meta_path(root: &Path, id: &str) -> PathBuf {
    root.join(DATASETS_DIR).join(format!("{id}.meta.json"))
}

fn examples_path(root: &Path, id: &str) -> PathBuf {
    root.join(DATASETS_DIR).join(format!("{id}.examples.jsonl"))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_dataset(root: &Path, id: &str) -> Result<Dataset> {
    let path = meta_path(root, id);
    let meta: MetaRecord =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| Error::malformed(&path, None, e))?;
    if meta.id != id {
        return Err(Error::malformed(
            &path,
            None,
            format!("meta id {:?} does not match manifest entry {id:?}", meta.id),
        ));
    }

    let tags: BTreeSet<String> = meta.tags.into_iter().collect();
    let labels = meta
        .labels
        .into_iter()
        .map(|l| Label {
            descriptions: l
                .descriptions
                .into_iter()
                .map(|d| LabelDescription {
                    id: d.id,
                    label_id: l.id.clone(),
                    dataset_id: id.to_string(),
                    question: d.question,
                    synthesized: d.synthesized,
                })
                .collect(),
            id: l.id,
            dataset_id: id.to_string(),
            name: l.name,
            null: l.null,
        })
        .collect();

    let path = examples_path(root, id);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut examples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::malformed(&path, Some(i + 1), e))?;
        examples.push(Example {
            id: rec.id,
            dataset_id: id.to_string(),
            text: rec.text,
            gold_labels: rec.labels.into_iter().collect(),
        });
    }

    Ok(Dataset {
        id: meta.id,
        name: meta.name,
        tags,
        eval_allowed: meta.eval_allowed,
        labels,
        examples,
    })
}

/// Loads and validates the corpus rooted at `root`.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus> {
    let root = root.as_ref();
    let path = root.join(MANIFEST_FILE);
    let manifest: ManifestRecord =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| Error::malformed(&path, None, e))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::malformed(
            &path,
            None,
            format!("unsupported corpus version {}", manifest.version),
        ));
    }
    let datasets = manifest
        .datasets
        .iter()
        .map(|id| load_dataset(root, id))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(datasets)
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `corpus` in the canonical format; `load_corpus` reads it back unchanged.
pub fn write_corpus(corpus: &Corpus, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    let dir = root.join(DATASETS_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let manifest = ManifestRecord {
        version: FORMAT_VERSION,
        datasets: corpus.datasets.iter().map(|d| d.id.clone()).collect(),
    };
    let path = root.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    for d in &corpus.datasets {
        let meta = MetaRecord {
            id: d.id.clone(),
            name: d.name.clone(),
            tags: d.tags.iter().cloned().collect(),
            eval_allowed: d.eval_allowed,
            labels: d
                .labels
                .iter()
                .map(|l| LabelRecord {
                    id: l.id.clone(),
                    name: l.name.clone(),
                    null: l.null,
                    descriptions: l
                        .descriptions
                        .iter()
                        .map(|q| DescriptionRecord {
                            id: q.id.clone(),
                            question: q.question.clone(),
                            synthesized: q.synthesized,
                        })
                        .collect(),
                })
                .collect(),
        };
        let path = meta_path(root, &d.id);
        let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let path = examples_path(root, &d.id);
        let mut out = create_file(&path)?;
        for ex in &d.examples {
            let rec = ExampleRecord {
                id: ex.id.clone(),
                text: ex.text.clone(),
                labels: ex.gold_labels.iter().cloned().collect(),
            };
            serde_json::to_writer(&mut out, &rec).expect("example serializes");
            out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation report

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DescriptionBalance {
    pub description_id: String,
    pub label_id: String,
    pub synthesized: bool,
    pub n_yes: usize,
    pub n_no: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub n_labels: usize,
    pub n_descriptions: usize,
    pub n_examples: usize,
    pub descriptions: Vec<DescriptionBalance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    NoPositives,
    NoNegatives,
    NoEvaluableDescriptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub dataset_id: String,
    pub description_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.description_id {
            Some(d) => write!(f, "{}/{}: {}", self.dataset_id, d, self.message),
            None => write!(f, "{}: {}", self.dataset_id, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub datasets: Vec<DatasetSummary>,
    pub warnings: Vec<Warning>,
}

/// Per-dataset counts and Yes/No balance, plus anything suspicious.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut datasets = Vec::new();
    let mut warnings = Vec::new();

    for d in corpus.datasets() {
        let mut balances = Vec::new();
        for desc in d.descriptions() {
            let n_yes = d
                .examples
                .iter()
                .filter(|ex| ex.gold_labels.contains(&desc.label_id))
                .count();
            let n_no = d.examples.len() - n_yes;
            let mut warn = |kind, message: &str| {
                warnings.push(Warning {
                    kind,
                    dataset_id: d.id.clone(),
                    description_id: Some(desc.id.clone()),
                    message: message.to_string(),
                })
            };
            if n_yes == 0 {
                warn(WarningKind::NoPositives, "description has 0 positives");
            }
            if n_no == 0 {
                warn(WarningKind::NoNegatives, "description has 0 negatives");
            }
            balances.push(DescriptionBalance {
                description_id: desc.id.clone(),
                label_id: desc.label_id.clone(),
                synthesized: desc.synthesized,
                n_yes,
                n_no,
            });
        }
        if d.eval_allowed && d.evaluable_descriptions().next().is_none() {
            warnings.push(Warning {
                kind: WarningKind::NoEvaluableDescriptions,
                dataset_id: d.id.clone(),
                description_id: None,
                message: "no evaluable descriptions".into(),
            });
        }
        datasets.push(DatasetSummary {
            dataset_id: d.id.clone(),
            n_labels: d.labels.len(),
            n_descriptions: balances.len(),
            n_examples: d.examples.len(),
            descriptions: balances,
        });
    }

    ValidationReport { datasets, warnings }
}

// ---------------------------------------------------------------------------
// Yes/No conversion

/// The unified training/evaluation unit: does `context` answer `question` with Yes?
///
/// Context and question stay separate; how they are concatenated is up to the scorer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QaInstance {
    pub dataset_id: String,
    pub description_id: String,
    pub example_id: String,
    pub context: String,
    pub question: String,
    pub answer: Answer,
}

impl QaInstance {
    pub fn new(description: &LabelDescription, example: &Example) -> Self {
        QaInstance {
            dataset_id: example.dataset_id.clone(),
            description_id: description.id.clone(),
            example_id: example.id.clone(),
            context: example.text.clone(),
            question: description.question.clone(),
            answer: Dataset::gold_answer(example, &description.label_id),
        }
    }
}

/// One instance per example of `dataset`, asked with the given description.
pub fn to_qa_instances(dataset: &Dataset, description_id: &str) -> Result<Vec<QaInstance>> {
    let desc = dataset
        .description(description_id)
        .ok_or_else(|| Error::UnknownDescription {
            dataset: dataset.id.clone(),
            description: description_id.to_string(),
        })?;
    Ok(dataset
        .examples
        .iter()
        .map(|ex| QaInstance::new(desc, ex))
        .collect())
}

/// Map from label id to the ids of its descriptions, in declaration order.
pub fn descriptions_by_label(dataset: &Dataset) -> BTreeMap<&str, Vec<&str>> {
    dataset
        .labels
        .iter()
        .map(|l| {
            (
                l.id.as_str(),
                l.descriptions.iter().map(|d| d.id.as_str()).collect(),
            )
        })
        .collect()
}
