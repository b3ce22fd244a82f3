//! Tag-based dataset similarity and train/eval split plans.
//!
//! Two datasets are similar iff their tag sets are exactly equal, so
//! `{emotion}` and `{emotion, social-media}` are different groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub tag_set: BTreeSet<String>,
    pub dataset_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Hold out the eval dataset's whole group.
    Unseen,
    /// Hold out only the eval dataset (leave-one-out).
    Similar,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Unseen => "unseen",
            SplitMode::Similar => "similar",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unseen" => Ok(SplitMode::Unseen),
            "similar" => Ok(SplitMode::Similar),
            other => Err(Error::InvalidArgument(format!(
                "unknown split mode {other:?} (expected unseen or similar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub eval_dataset_id: String,
    pub train_dataset_ids: Vec<String>,
    pub mode: SplitMode,
}

impl SplitPlan {
    /// `<mode>:<eval dataset id>`, the form accepted by [`plan_for`].
    pub fn id(&self) -> String {
        format!("{}:{}", self.mode, self.eval_dataset_id)
    }
}

/// Partitions the corpus by exact tag set.
///
/// Untagged datasets each form their own group. Groups are ordered by tag set,
/// then by first dataset id.
pub fn group_by_tags(corpus: &Corpus) -> Vec<Group> {
    let mut tagged: BTreeMap<&BTreeSet<String>, Vec<String>> = BTreeMap::new();
    let mut groups = Vec::new();
    for d in corpus.datasets() {
        if d.tags.is_empty() {
            groups.push(Group {
                tag_set: BTreeSet::new(),
                dataset_ids: vec![d.id.clone()],
            });
        } else {
            tagged.entry(&d.tags).or_default().push(d.id.clone());
        }
    }
    groups.extend(tagged.into_iter().map(|(tags, mut ids)| {
        ids.sort();
        Group {
            tag_set: tags.clone(),
            dataset_ids: ids,
        }
    }));
    groups.sort_by(|a, b| {
        a.tag_set
            .iter()
            .cmp(b.tag_set.iter())
            .then_with(|| a.dataset_ids[0].cmp(&b.dataset_ids[0]))
    });
    groups
}

fn plan(corpus: &Corpus, eval_id: &str, mode: SplitMode) -> Result<SplitPlan> {
    let eval = corpus.dataset(eval_id)?;
    let similar = |tags: &BTreeSet<String>| !eval.tags.is_empty() && *tags == eval.tags;
    let train: Vec<String> = corpus
        .datasets()
        .iter()
        .filter(|d| d.id != eval.id)
        .filter(|d| mode == SplitMode::Similar || !similar(&d.tags))
        .map(|d| d.id.clone())
        .collect();
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet {
            eval: eval.id.clone(),
        });
    }
    Ok(SplitPlan {
        eval_dataset_id: eval.id.clone(),
        train_dataset_ids: train,
        mode,
    })
}

/// One plan per eval-allowed dataset, ordered by eval dataset id.
pub fn make_splits(corpus: &Corpus, mode: SplitMode) -> Result<Vec<SplitPlan>> {
    if corpus.len() < 2 {
        return Err(Error::TooFewDatasets(corpus.len()));
    }
    corpus
        .datasets()
        .iter()
        .filter(|d| d.eval_allowed)
        .map(|d| plan(corpus, &d.id, mode))
        .collect()
}

/// Resolves a split id (`unseen:<id>`, `similar:<id>`, or a bare dataset id
/// meaning `unseen:<id>`) against the corpus.
pub fn plan_for(corpus: &Corpus, split_id: &str) -> Result<SplitPlan> {
    let (mode, eval_id) = match split_id.split_once(':') {
        Some((mode, id)) => (mode.parse()?, id),
        None => (SplitMode::Unseen, split_id),
    };
    if corpus.len() < 2 {
        return Err(Error::TooFewDatasets(corpus.len()));
    }
    let eval = corpus.dataset(eval_id)?;
    if !eval.eval_allowed {
        return Err(Error::InvalidArgument(format!(
            "dataset {eval_id:?} is train-only and cannot be evaluated"
        )));
    }
    plan(corpus, eval_id, mode)
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanRecord {
    eval: String,
    train: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitsRecord {
    mode: SplitMode,
    plans: Vec<PlanRecord>,
}

/// Renders `splits.json`. All plans must share one mode.
pub fn splits_to_json(mode: SplitMode, plans: &[SplitPlan]) -> String {
    let rec = SplitsRecord {
        mode,
        plans: plans
            .iter()
            .map(|p| PlanRecord {
                eval: p.eval_dataset_id.clone(),
                train: p.train_dataset_ids.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&rec).expect("splits serialize");
    s.push('\n');
    s
}

pub fn read_splits(path: &Path) -> Result<Vec<SplitPlan>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rec: SplitsRecord = serde_json::from_str(&text).map_err(|e| Error::malformed(path, None, e))?;
    Ok(rec
        .plans
        .into_iter()
        .map(|p| SplitPlan {
            eval_dataset_id: p.eval,
            train_dataset_ids: p.train,
            mode: rec.mode,
        })
        .collect())
}
