//! Score tables, per-description AUC and description ensembling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::auc::auc_roc;
use crate::corpus::{Answer, Corpus, Dataset};
use crate::error::{Error, Result};
use crate::grouping::SplitPlan;
use crate::scorer::{Prompt, Scorer};

/// Prefix of the synthetic description id given to ensembled rows.
pub const ENSEMBLE_PREFIX: &str = "ens:";

/// Prompts sent to a scorer per call during evaluation.
pub const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub dataset_id: String,
    pub description_id: String,
    pub label_id: String,
    pub example_id: String,
    pub p_yes: f64,
    pub gold: Answer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionAuc {
    pub dataset_id: String,
    pub description_id: String,
    pub label_id: String,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// A description left out of the AUC list because its gold answers are single-class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub dataset_id: String,
    pub description_id: String,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} excluded: single-class gold ({} positives, {} negatives)",
            self.dataset_id, self.description_id, self.n_pos, self.n_neg
        )
    }
}

type RowKey<'a> = (&'a str, &'a str);

impl ScoreTable {
    fn by_description(&self) -> BTreeMap<RowKey<'_>, Vec<&ScoreRow>> {
        let mut groups: BTreeMap<RowKey<'_>, Vec<&ScoreRow>> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry((r.dataset_id.as_str(), r.description_id.as_str()))
                .or_default()
                .push(r);
        }
        groups
    }

    /// AUC per description, sorted by (dataset, description). Single-class
    /// descriptions are returned separately.
    pub fn description_aucs(&self) -> (Vec<DescriptionAuc>, Vec<Exclusion>) {
        let mut aucs = Vec::new();
        let mut excluded = Vec::new();
        for ((dataset_id, description_id), rows) in self.by_description() {
            let scores: Vec<f64> = rows.iter().map(|r| r.p_yes).collect();
            let golds: Vec<Answer> = rows.iter().map(|r| r.gold).collect();
            let n_pos = golds.iter().filter(|g| g.is_yes()).count();
            let n_neg = golds.len() - n_pos;
            match auc_roc(&scores, &golds) {
                Ok(auc) => aucs.push(DescriptionAuc {
                    dataset_id: dataset_id.to_string(),
                    description_id: description_id.to_string(),
                    label_id: rows[0].label_id.clone(),
                    auc,
                    n_pos,
                    n_neg,
                }),
                Err(_) => excluded.push(Exclusion {
                    dataset_id: dataset_id.to_string(),
                    description_id: description_id.to_string(),
                    n_pos,
                    n_neg,
                }),
            }
        }
        (aucs, excluded)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: ScoreTable,
    pub aucs: Vec<DescriptionAuc>,
    pub excluded: Vec<Exclusion>,
    /// Mean description AUC per dataset.
    pub dataset_means: Vec<(String, f64)>,
}

impl Evaluation {
    fn from_table(table: ScoreTable) -> Self {
        let (aucs, excluded) = table.description_aucs();
        let dataset_means = dataset_means(&aucs);
        Evaluation {
            table,
            aucs,
            excluded,
            dataset_means,
        }
    }

    /// The same evaluation with descriptions of each label averaged.
    pub fn ensembled(&self) -> Self {
        Evaluation::from_table(ensemble_descriptions(&self.table))
    }

    pub fn mean_auc(&self) -> Option<f64> {
        mean_auc(&self.aucs)
    }
}

pub fn mean_auc(aucs: &[DescriptionAuc]) -> Option<f64> {
    if aucs.is_empty() {
        None
    } else {
        Some(aucs.iter().map(|a| a.auc).sum::<f64>() / aucs.len() as f64)
    }
}

pub fn dataset_means(aucs: &[DescriptionAuc]) -> Vec<(String, f64)> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for a in aucs {
        let e = sums.entry(&a.dataset_id).or_default();
        e.0 += a.auc;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(d, (s, n))| (d.to_string(), s / n as f64))
        .collect()
}

/// Scores every evaluable (non-synthesized) description of `dataset` against
/// every example.
pub fn score_dataset<S: Scorer + ?Sized>(scorer: &mut S, dataset: &Dataset) -> Result<ScoreTable> {
    let descriptions: Vec<_> = dataset.evaluable_descriptions().collect();
    if descriptions.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "dataset {:?} has no evaluable descriptions",
            dataset.id
        )));
    }
    let mut rows = Vec::with_capacity(descriptions.len() * dataset.examples.len());
    for desc in descriptions {
        for chunk in dataset.examples.chunks(EVAL_CHUNK) {
            let prompts: Vec<Prompt<'_>> = chunk
                .iter()
                .map(|ex| Prompt {
                    context: &ex.text,
                    question: &desc.question,
                })
                .collect();
            let scores = scorer.score_batch(&prompts)?;
            if scores.len() != chunk.len() {
                return Err(Error::Protocol(format!(
                    "scorer returned {} scores for {} prompts",
                    scores.len(),
                    chunk.len()
                )));
            }
            for (ex, p_yes) in chunk.iter().zip(scores) {
                if !(0.0..=1.0).contains(&p_yes) {
                    return Err(Error::Protocol(format!("probability out of range: {p_yes}")));
                }
                rows.push(ScoreRow {
                    dataset_id: dataset.id.clone(),
                    description_id: desc.id.clone(),
                    label_id: desc.label_id.clone(),
                    example_id: ex.id.clone(),
                    p_yes,
                    gold: Dataset::gold_answer(ex, &desc.label_id),
                });
            }
        }
    }
    Ok(ScoreTable { rows })
}

/// Scores one dataset and computes its description AUCs.
pub fn eval_dataset<S: Scorer + ?Sized>(scorer: &mut S, dataset: &Dataset) -> Result<Evaluation> {
    Ok(Evaluation::from_table(score_dataset(scorer, dataset)?))
}

/// Evaluates `scorer` on the plan's held-out dataset.
pub fn eval_descriptions<S: Scorer + ?Sized>(
    scorer: &mut S,
    corpus: &Corpus,
    plan: &SplitPlan,
) -> Result<Evaluation> {
    eval_dataset(scorer, corpus.dataset(&plan.eval_dataset_id)?)
}

/// Averages P(Yes) over each label's descriptions, per example. Output rows
/// use the description id `ens:<label_id>`.
pub fn ensemble_descriptions(table: &ScoreTable) -> ScoreTable {
    // (dataset, label, example) -> rows, each sorted by description id
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&ScoreRow>> = BTreeMap::new();
    for r in &table.rows {
        groups
            .entry((&r.dataset_id, &r.label_id, &r.example_id))
            .or_default()
            .push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((dataset_id, label_id, example_id), mut members)| {
            members.sort_by(|a, b| a.description_id.cmp(&b.description_id));
            // running mean: exact when every member carries the same value
            let mut mean = 0.0;
            for (i, r) in members.iter().enumerate() {
                mean += (r.p_yes - mean) / (i + 1) as f64;
            }
            ScoreRow {
                dataset_id: dataset_id.to_string(),
                description_id: format!("{ENSEMBLE_PREFIX}{label_id}"),
                label_id: label_id.to_string(),
                example_id: example_id.to_string(),
                p_yes: mean.clamp(0.0, 1.0),
                gold: members[0].gold,
            }
        })
        .collect();
    ScoreTable { rows }
}

/// Writes `eval.csv`: `dataset_id,description_id,label_id,auc,n_pos,n_neg`.
pub fn write_eval_csv(path: &Path, aucs: &[DescriptionAuc]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for a in aucs {
        w.serialize(a).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<DescriptionAuc>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["dataset_id", "description_id", "label_id", "auc", "n_pos", "n_neg"];
    if headers.iter().ne(expected) {
        return Err(Error::malformed(path, Some(1), format!("unexpected header {headers:?}")));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::malformed(path, Some(i + 2), e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::malformed(path, None, format!("{other:?}")),
    }
}
