//! Threshold-based benchmark metrics: multi-label resolution, label-weighted
//! F1 and accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::table::{ensemble_descriptions, score_dataset};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::scorer::Scorer;

pub const DEFAULT_YES_THRESHOLD: f64 = 0.5;

/// Gold placeholder for null-class examples when no null label is named.
pub const NO_LABEL: &str = "<none>";

/// Picks the label with the highest P(Yes) among those above `yes_threshold`.
///
/// Ties go to the lexicographically smallest label id. When no label clears
/// the threshold, returns `null_label` if given, otherwise the overall argmax.
pub fn resolve_label(
    p_yes_by_label: &BTreeMap<String, f64>,
    yes_threshold: f64,
    null_label: Option<&str>,
) -> Result<String> {
    let argmax = |filter: &dyn Fn(f64) -> bool| {
        let mut best: Option<(&String, f64)> = None;
        for (label, &p) in p_yes_by_label {
            if filter(p) && best.is_none_or(|(_, b)| p > b) {
                best = Some((label, p));
            }
        }
        best.map(|(l, _)| l.clone())
    };
    if p_yes_by_label.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(label) = argmax(&|p| p > yes_threshold) {
        return Ok(label);
    }
    match null_label {
        Some(null) => Ok(null.to_string()),
        None => Ok(argmax(&|_| true).expect("map is non-empty")),
    }
}

fn check_lengths<T>(preds: &[T], golds: &[T]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Support-weighted mean of per-label F1 over the labels that occur in `golds`.
pub fn weighted_f1<T: Ord>(preds: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(preds, golds)?;
    #[derive(Default)]
    struct Counts {
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut counts: BTreeMap<&T, Counts> = BTreeMap::new();
    for (p, g) in preds.iter().zip(golds) {
        if p == g {
            counts.entry(g).or_default().tp += 1;
        } else {
            counts.entry(p).or_default().fp += 1;
            counts.entry(g).or_default().fn_ += 1;
        }
    }
    let mut weighted = 0.0;
    let mut support_total = 0usize;
    for c in counts.values() {
        let support = c.tp + c.fn_;
        if support == 0 {
            continue;
        }
        let precision = if c.tp + c.fp == 0 {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        let recall = c.tp as f64 / support as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted += support as f64 * f1;
        support_total += support;
    }
    Ok(weighted / support_total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkMetric {
    WeightedF1,
    Accuracy,
}

impl FromStr for BenchmarkMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted-f1" => Ok(BenchmarkMetric::WeightedF1),
            "accuracy" => Ok(BenchmarkMetric::Accuracy),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for BenchmarkMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchmarkMetric::WeightedF1 => "weighted-f1",
            BenchmarkMetric::Accuracy => "accuracy",
        })
    }
}

impl BenchmarkMetric {
    pub fn compute(self, preds: &[String], golds: &[String]) -> Result<f64> {
        match self {
            BenchmarkMetric::WeightedF1 => weighted_f1(preds, golds),
            BenchmarkMetric::Accuracy => accuracy(preds, golds),
        }
    }
}

/// Single-label predictions and golds for every example of `dataset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub example_ids: Vec<String>,
    pub preds: Vec<String>,
    pub golds: Vec<String>,
}

/// Scores every example against every described label (P(Yes) averaged over
/// the label's evaluable descriptions) and resolves one label per example.
///
/// An example's gold is its single gold label; for a multi-label example it is
/// the prediction when that is among the gold labels, otherwise the smallest
/// gold id. Null-class examples take `null_label` (or [`NO_LABEL`]).
pub fn predict_labels<S: Scorer + ?Sized>(
    scorer: &mut S,
    dataset: &Dataset,
    yes_threshold: f64,
    null_label: Option<&str>,
) -> Result<Predictions> {
    if let Some(null) = null_label {
        if dataset.label(null).is_none() {
            return Err(Error::InvalidArgument(format!(
                "null label {null:?} is not declared in dataset {:?}",
                dataset.id
            )));
        }
    }
    let table = ensemble_descriptions(&score_dataset(scorer, dataset)?);
    let mut by_example: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &table.rows {
        by_example
            .entry(&r.example_id)
            .or_default()
            .insert(r.label_id.clone(), r.p_yes);
    }

    let mut out = Predictions {
        example_ids: Vec::new(),
        preds: Vec::new(),
        golds: Vec::new(),
    };
    for ex in &dataset.examples {
        let probs = &by_example[ex.id.as_str()];
        let pred = resolve_label(probs, yes_threshold, null_label)?;
        let gold_set: &BTreeSet<String> = &ex.gold_labels;
        let gold = if gold_set.contains(&pred) {
            pred.clone()
        } else {
            match gold_set.iter().next() {
                Some(g) => g.clone(),
                None => null_label.unwrap_or(NO_LABEL).to_string(),
            }
        };
        out.example_ids.push(ex.id.clone());
        out.preds.push(pred);
        out.golds.push(gold);
    }
    Ok(out)
}
