use crate::corpus::Answer;
use crate::error::{Error, Result};

/// AUC-ROC with Yes as the positive class, ties counted half.
///
/// Computed from the Mann-Whitney rank sum with midranks, which equals
/// `(#{pos > neg} + 0.5 #{pos == neg}) / (n_pos n_neg)` over all pairs.
pub fn auc_roc(scores: &[f64], golds: &[Answer]) -> Result<f64> {
    if scores.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: golds.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = golds.iter().filter(|g| g.is_yes()).count();
    let n_neg = golds.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 2*rank over positives keeps every quantity an integer.
    let mut twice_rank_sum = 0u64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share the midrank (start + 1 + end) / 2
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_run = order[start..end].iter().filter(|&&i| golds[i].is_yes()).count() as u64;
        twice_rank_sum += twice_mid * pos_in_run;
        start = end;
    }
    let np = n_pos as u64;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * n_neg as u64) as f64)
}
