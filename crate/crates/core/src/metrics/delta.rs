//! Paired comparison of two models' description AUCs.
//!
//! For every description scored by both models, `delta = auc_cand - auc_base`.
//! The distribution of deltas is summarized under three weightings:
//!
//! * description: every description weighs 1
//! * label: `1 / #descriptions of its label`
//! * dataset: `1 / #descriptions of its dataset`
//!
//! counting only descriptions present in both tables. The candidate is better
//! only when `E[delta] > 0` and `P[delta > t] > P[delta < -t]` for every
//! threshold, under every weighting: 12 conditions with the default thresholds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::table::DescriptionAuc;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Description,
    Label,
    Dataset,
}

impl Weighting {
    pub const ALL: [Weighting; 3] = [Weighting::Description, Weighting::Label, Weighting::Dataset];
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Description => "description",
            Weighting::Label => "label",
            Weighting::Dataset => "dataset",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "description" => Ok(Weighting::Description),
            "label" => Ok(Weighting::Label),
            "dataset" => Ok(Weighting::Dataset),
            other => Err(Error::InvalidArgument(format!("unknown weighting {other:?}"))),
        }
    }
}

/// One description present in both tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedAuc {
    pub dataset_id: String,
    pub description_id: String,
    pub label_id: String,
    pub base: f64,
    pub cand: f64,
    pub w_desc: f64,
    pub w_label: f64,
    pub w_dataset: f64,
}

impl PairedAuc {
    pub fn delta(&self) -> f64 {
        self.cand - self.base
    }

    pub fn weight(&self, w: Weighting) -> f64 {
        match w {
            Weighting::Description => self.w_desc,
            Weighting::Label => self.w_label,
            Weighting::Dataset => self.w_dataset,
        }
    }
}

/// Joins the two tables on (dataset, description) and attaches weights.
/// Rows come out sorted by (dataset, description).
pub fn pair_aucs(base: &[DescriptionAuc], cand: &[DescriptionAuc]) -> Result<Vec<PairedAuc>> {
    let cand: BTreeMap<(&str, &str), &DescriptionAuc> = cand
        .iter()
        .map(|a| ((a.dataset_id.as_str(), a.description_id.as_str()), a))
        .collect();
    let mut shared: BTreeMap<(&str, &str), (&DescriptionAuc, &DescriptionAuc)> = BTreeMap::new();
    for b in base {
        let key = (b.dataset_id.as_str(), b.description_id.as_str());
        if let Some(c) = cand.get(&key) {
            shared.insert(key, (b, c));
        }
    }
    if shared.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    let mut per_label: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut per_dataset: BTreeMap<&str, usize> = BTreeMap::new();
    for (b, _) in shared.values() {
        *per_label.entry((&b.dataset_id, &b.label_id)).or_default() += 1;
        *per_dataset.entry(&b.dataset_id).or_default() += 1;
    }

    Ok(shared
        .values()
        .map(|(b, c)| PairedAuc {
            dataset_id: b.dataset_id.clone(),
            description_id: b.description_id.clone(),
            label_id: b.label_id.clone(),
            base: b.auc,
            cand: c.auc,
            w_desc: 1.0,
            w_label: 1.0 / per_label[&(b.dataset_id.as_str(), b.label_id.as_str())] as f64,
            w_dataset: 1.0 / per_dataset[b.dataset_id.as_str()] as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaStats {
    pub weighting: Weighting,
    pub thresholds: Vec<f64>,
    pub e_delta: f64,
    /// `P[delta > t]`, aligned with `thresholds`.
    pub p_gt: Vec<f64>,
    /// `P[delta < -t]`, aligned with `thresholds`.
    pub p_lt: Vec<f64>,
    /// Weighted population standard deviation.
    pub std_delta: f64,
    pub n_descriptions: usize,
}

/// Weighted summary of an already-paired table.
pub fn summarize(pairs: &[PairedAuc], weighting: Weighting, thresholds: &[f64]) -> DeltaStats {
    let total: f64 = pairs.iter().map(|p| p.weight(weighting)).sum();
    let e_delta = pairs.iter().map(|p| p.weight(weighting) * p.delta()).sum::<f64>() / total;
    let fraction = |pred: &dyn Fn(f64) -> bool| {
        pairs
            .iter()
            .filter(|p| pred(p.delta()))
            .map(|p| p.weight(weighting))
            .sum::<f64>()
            / total
    };
    let p_gt = thresholds.iter().map(|&t| fraction(&|d| d > t)).collect();
    let p_lt = thresholds.iter().map(|&t| fraction(&|d| d < -t)).collect();
    let var = pairs
        .iter()
        .map(|p| p.weight(weighting) * (p.delta() - e_delta).powi(2))
        .sum::<f64>()
        / total;
    DeltaStats {
        weighting,
        thresholds: thresholds.to_vec(),
        e_delta,
        p_gt,
        p_lt,
        std_delta: var.sqrt(),
        n_descriptions: pairs.len(),
    }
}

pub fn delta_stats(
    base: &[DescriptionAuc],
    cand: &[DescriptionAuc],
    weighting: Weighting,
    thresholds: &[f64],
) -> Result<DeltaStats> {
    Ok(summarize(&pair_aucs(base, cand)?, weighting, thresholds))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// `E[delta] > 0`
    MeanPositive(Weighting),
    /// `P[delta > t] > P[delta < -t]`
    MoreGainsThanLosses(Weighting, f64),
}

impl Condition {
    pub fn weighting(&self) -> Weighting {
        match *self {
            Condition::MeanPositive(w) | Condition::MoreGainsThanLosses(w, _) => w,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::MeanPositive(w) => write!(f, "E[delta] > 0 under {w} weighting"),
            Condition::MoreGainsThanLosses(w, t) => {
                write!(f, "P[delta > {t}] > P[delta < -{t}] under {w} weighting")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub better: bool,
    pub failed_conditions: Vec<Condition>,
    /// One block per weighting, in [`Weighting::ALL`] order.
    pub stats: Vec<DeltaStats>,
}

/// Checks every condition of the better-model rule for `cand` over `base`.
pub fn verdict(base: &[DescriptionAuc], cand: &[DescriptionAuc], thresholds: &[f64]) -> Result<Verdict> {
    let pairs = pair_aucs(base, cand)?;
    let stats: Vec<DeltaStats> = Weighting::ALL
        .iter()
        .map(|&w| summarize(&pairs, w, thresholds))
        .collect();
    let mut failed = Vec::new();
    for s in &stats {
        if s.e_delta <= 0.0 {
            failed.push(Condition::MeanPositive(s.weighting));
        }
        for (i, &t) in s.thresholds.iter().enumerate() {
            if s.p_gt[i] <= s.p_lt[i] {
                failed.push(Condition::MoreGainsThanLosses(s.weighting, t));
            }
        }
    }
    Ok(Verdict {
        better: failed.is_empty(),
        failed_conditions: failed,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub description_id: String,
    pub auc_x: f64,
    pub auc_y: f64,
    pub w_desc: f64,
    pub w_label: f64,
    pub w_dataset: f64,
}

/// One point per shared description: x is the base model, y the candidate.
pub fn scatter_data(base: &[DescriptionAuc], cand: &[DescriptionAuc]) -> Result<Vec<ScatterRow>> {
    Ok(pair_aucs(base, cand)?
        .into_iter()
        .map(|p| ScatterRow {
            description_id: p.description_id,
            auc_x: p.base,
            auc_y: p.cand,
            w_desc: p.w_desc,
            w_label: p.w_label,
            w_dataset: p.w_dataset,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// stats.json / scatter.csv

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub weighting: Weighting,
    pub thresholds: Vec<f64>,
    pub e_delta: f64,
    pub p_gt: BTreeMap<String, f64>,
    pub p_lt: BTreeMap<String, f64>,
    pub std_delta: f64,
    pub n_descriptions: usize,
}

impl From<&DeltaStats> for StatsRecord {
    fn from(s: &DeltaStats) -> Self {
        let keyed = |v: &[f64]| {
            s.thresholds
                .iter()
                .zip(v)
                .map(|(t, p)| (t.to_string(), *p))
                .collect()
        };
        StatsRecord {
            weighting: s.weighting,
            thresholds: s.thresholds.clone(),
            e_delta: s.e_delta,
            p_gt: keyed(&s.p_gt),
            p_lt: keyed(&s.p_lt),
            std_delta: s.std_delta,
            n_descriptions: s.n_descriptions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub better: bool,
    pub failed_conditions: Vec<String>,
    pub stats: Vec<StatsRecord>,
}

impl From<&Verdict> for VerdictRecord {
    fn from(v: &Verdict) -> Self {
        VerdictRecord {
            better: v.better,
            failed_conditions: v.failed_conditions.iter().map(ToString::to_string).collect(),
            stats: v.stats.iter().map(StatsRecord::from).collect(),
        }
    }
}

pub fn write_scatter_csv(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed(path, None, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::malformed(path, None, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
