use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} scores for {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invalid("scores must be finite".into()));
    }
    Ok(())
}

/// Node indices ordered by descending score, ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Fraction of true anomalies among the `k` highest-scored nodes.
pub fn accuracy_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<f64> {
    check(scores, labels)?;
    if k == 0 {
        return Err(Error::Invalid("k must be positive".into()));
    }
    if k > scores.len() {
        return Err(Error::Invalid(format!("k = {k} exceeds n = {}", scores.len())));
    }
    let hits = rank_descending(scores)
        .into_iter()
        .take(k)
        .filter(|&i| labels[i])
        .count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub auc: f64,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct threshold.
    pub points: Vec<(f64, f64)>,
}

impl Roc {
    /// Area under `points` by the trapezoid rule.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fpr\ttpr\n");
        for (f, t) in &self.points {
            out.push_str(&format!("{f}\t{t}\n"));
        }
        out
    }
}

/// ROC curve and the Mann–Whitney AUC with midranks for ties.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Invalid(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }

    let mut ascending = rank_descending(scores);
    ascending.reverse();
    // Doubled midranks keep the rank sum integral.
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < ascending.len() {
        let mut end = start + 1;
        while end < ascending.len() && scores[ascending[end]] == scores[ascending[start]] {
            end += 1;
        }
        let doubled = (start + 1 + end) as u64;
        let positives = ascending[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        doubled_rank_sum += doubled * positives;
        start = end;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    let auc = doubled_u as f64 / (2 * pos * neg) as f64;

    let descending = rank_descending(scores);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut start = 0;
    while start < descending.len() {
        let mut end = start;
        while end < descending.len() && scores[descending[end]] == scores[descending[start]] {
            if labels[descending[end]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        start = end;
    }
    Ok(Roc { auc, points })
}
