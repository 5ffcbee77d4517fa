//! Attack evaluation: per-example accuracy, ROC/AUC, low-FPR operating
//! points, rank correlation, and the Chow test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lira::ScoreRecord;

mod chow;
mod special;

pub use chow::chow_test;
pub use special::{f_tail, inc_beta, ln_gamma};

/// How often the zero-threshold likelihood-ratio rule identifies one
/// example's membership across evaluation models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerExampleResult {
    pub id: usize,
    /// Fraction of evaluation models whose membership was called
    /// correctly.
    pub accuracy: f64,
    pub n_in: usize,
    pub n_out: usize,
    /// Binomial standard error `sqrt(a(1-a)/n)`.
    pub std_err: f64,
}

/// A receiver operating characteristic from one score population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(FPR, TPR)` points, both coordinates non-decreasing, from
    /// `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    /// Area under the curve by trapezoid rule.
    pub auc: f64,
    /// Number of scores the curve was built from.
    pub n_scores: usize,
}

fn truth_of(r: &ScoreRecord) -> Result<bool> {
    r.is_in.ok_or_else(|| {
        Error::invalid_argument(format!(
            "record for example {} carries no ground-truth membership",
            r.id
        ))
    })
}

/// Per-example attack accuracy under the likelihood-ratio decision rule
/// at equal priors: predict IN iff the score is strictly positive.
/// Results are sorted by example ID.
pub fn per_example_accuracy(records: &[ScoreRecord]) -> Result<Vec<PerExampleResult>> {
    if records.is_empty() {
        return Err(Error::insufficient_data("no records"));
    }
    // id -> (n_in, n_out, correct)
    let mut groups: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        if !r.score.is_finite() {
            return Err(Error::invalid_argument(format!(
                "non-finite score for example {}",
                r.id
            )));
        }
        let is_in = truth_of(r)?;
        let entry = groups.entry(r.id).or_insert((0, 0, 0));
        if is_in {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
        let predicted_in = r.score > 0.0;
        if predicted_in == is_in {
            entry.2 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(id, (n_in, n_out, correct))| {
            if n_in == 0 || n_out == 0 {
                return Err(Error::insufficient_data(format!(
                    "example {id} has {n_in} IN and {n_out} OUT records (need >= 1 each)"
                )));
            }
            let total = (n_in + n_out) as f64;
            let accuracy = correct as f64 / total;
            Ok(PerExampleResult {
                id,
                accuracy,
                n_in,
                n_out,
                std_err: (accuracy * (1.0 - accuracy) / total).sqrt(),
            })
        })
        .collect()
}

/// ROC curve by descending threshold sweep; tied scores move the curve
/// in a single segment, so the trapezoid AUC equals the all-pairs
/// estimator with half-credit for ties.
pub fn roc_curve(records: &[ScoreRecord]) -> Result<RocCurve> {
    let mut scored = Vec::with_capacity(records.len());
    for r in records {
        if !r.score.is_finite() {
            return Err(Error::invalid_argument(format!(
                "non-finite score for example {}",
                r.id
            )));
        }
        scored.push((r.score, truth_of(r)?));
    }
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid_argument(format!(
            "need both classes to sweep a threshold, got {pos} IN and {neg} OUT"
        )));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are finite"));
    let mut points = Vec::with_capacity(scored.len() + 2);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc, n_scores: scored.len() })
}

/// Highest TPR among curve points whose FPR does not exceed the target:
/// the conservative step rule, no interpolation. The caller keeps
/// `fpr_target` inside `(0, 1)`.
pub fn tpr_at_fpr(curve: &RocCurve, fpr_target: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.0 <= fpr_target)
        .map(|p| p.1)
        .fold(0.0, f64::max)
}

/// Ranks with ties sharing their average position, 1-based.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share the mean of ranks i+1..=j.
        let shared = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = shared;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid_argument(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::insufficient_data(format!(
            "need >= 3 paired observations, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument("non-finite observation"));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid_argument(
            "constant input has no rank correlation",
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One-sided sign test: probability of at least `n_pos` successes in
/// `n_pos + n_neg` fair coin flips. Tied pairs are excluded by the
/// caller before counting.
pub fn sign_test(n_pos: usize, n_neg: usize) -> f64 {
    if n_pos == 0 {
        return 1.0;
    }
    // Binomial upper tail via the incomplete beta:
    // P(X >= k | n, 1/2) = I_{1/2}(k, n - k + 1).
    special::inc_beta(n_pos as f64, (n_neg + 1) as f64, 0.5)
}
