//! Training curves anchored at a reference checkpoint.

use serde::Serialize;

use super::kendall::{kendall_tau, KendallResult};
use crate::error::{Error, Result};

pub const DEFAULT_REFERENCE_STEP: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_auc: f64,
    /// `mean_auc - mean_auc(reference step)`
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub reference_step: usize,
    pub points: Vec<CurvePoint>,
    /// Kendall tau between step and mean AUC.
    pub kendall: Option<KendallResult>,
    /// Why `kendall` is missing, if it is.
    pub kendall_error: Option<String>,
}

pub fn relative_auc_curve(evals: &[(usize, f64)], reference_step: usize) -> Result<Curve> {
    let mut evals = evals.to_vec();
    evals.sort_by_key(|&(step, _)| step);
    if evals.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate step in checkpoint series".into()));
    }
    let reference = evals
        .iter()
        .find(|(s, _)| *s == reference_step)
        .map(|&(_, auc)| auc)
        .ok_or(Error::MissingReferenceStep(reference_step))?;

    let points = evals
        .iter()
        .map(|&(step, mean_auc)| CurvePoint {
            step,
            mean_auc,
            relative: mean_auc - reference,
        })
        .collect();
    let steps: Vec<f64> = evals.iter().map(|&(s, _)| s as f64).collect();
    let aucs: Vec<f64> = evals.iter().map(|&(_, a)| a).collect();
    let (kendall, kendall_error) = match kendall_tau(&steps, &aucs) {
        Ok(k) => (Some(k), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Curve {
        reference_step,
        points,
        kendall,
        kendall_error,
    })
}
