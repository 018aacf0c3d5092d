//! Detection metrics. Attack is the positive class and a rejected sequence
//! counts as a positive prediction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::scoring::{rank_order, Decision, ScoredSequence};

/// Confusion counts and the ratios derived from them. A ratio whose
/// denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub acc: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        EvalReport {
            tp,
            tn,
            fp,
            fn_,
            acc: ratio(tp + tn, tp + tn + fp + fn_),
            fpr: ratio(fp, fp + tn),
            precision,
            recall,
            f1,
        }
    }
}

/// Confusion counts over `(decision, true label)` pairs.
pub fn evaluate<I>(pairs: I) -> EvalReport
where
    I: IntoIterator<Item = (Decision, Label)>,
{
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (d, l) in pairs {
        match (d, l) {
            (Decision::Reject, Label::Attack) => tp += 1,
            (Decision::Reject, Label::Normal) => fp += 1,
            (Decision::Accept, Label::Attack) => fn_ += 1,
            (Decision::Accept, Label::Normal) => tn += 1,
        }
    }
    EvalReport::from_counts(tp, tn, fp, fn_)
}

/// Evaluates scored sequences; every one must carry a label.
pub fn evaluate_scored(scored: &[ScoredSequence]) -> Result<EvalReport> {
    let pairs = labels_of(scored)?;
    Ok(evaluate(scored.iter().map(|s| s.decision).zip(pairs)))
}

fn labels_of(scored: &[ScoredSequence]) -> Result<Vec<Label>> {
    scored
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::MissingField(format!("label for flow {}->{}", s.flow.src_ip, s.flow.dst_ip)))
        })
        .collect()
}

/// Probability that a random normal sequence scores above a random attack
/// sequence, ties counting one half. `scores` are higher-is-more-normal.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann-Whitney: sum of normal ranks (average rank within ties).
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == Label::Normal {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let n_normal = labels.iter().filter(|&&l| l == Label::Normal).count() as f64;
    let n_attack = labels.len() as f64 - n_normal;
    if n_normal == 0.0 || n_attack == 0.0 {
        return Err(Error::Domain("AUC needs both normal and attack examples".into()));
    }
    Ok((rank_sum - n_normal * (n_normal + 1.0) / 2.0) / (n_normal * n_attack))
}

/// Rejects the lowest `⌊r · n⌋` of `scores` (higher-is-more-normal) and
/// evaluates against `labels`, with the same tie rule as the scoring
/// module (flow order is replaced by input order).
pub fn evaluate_at_rejection(scores: &[f64], labels: &[Label], r: f64) -> Result<EvalReport> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("rejection ratio {r} outside [0, 1]")));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let n_reject = ((r * n as f64).floor() as usize).min(n);
    let mut decisions = vec![Decision::Accept; n];
    for &i in &order[n - n_reject..] {
        decisions[i] = Decision::Reject;
    }
    Ok(evaluate(decisions.into_iter().zip(labels.iter().copied())))
}

/// Grid point `i` of the rejection curve.
pub fn curve_ratio(i: usize) -> f64 {
    i as f64 / 100.0
}

/// `(r, false rejection rate)` for `r = 0, 0.01, ..., 1`: the share of all
/// true-normal sequences that fall in the rejected bottom `⌊r · n⌋`.
/// Built from a single sort.
pub fn rejection_curve(scored: &[ScoredSequence]) -> Result<Vec<(f64, f64)>> {
    let labels = labels_of(scored)?;
    let n_normal = labels.iter().filter(|&&l| l == Label::Normal).count();
    if n_normal == 0 {
        return Err(Error::Domain("rejection curve needs normal sequences".into()));
    }
    let ratios: Vec<f64> = scored.iter().map(|s| s.ratio).collect();
    let flows: Vec<_> = scored.iter().map(|s| &s.flow).collect();
    let order = rank_order(&ratios, &flows);
    let n = scored.len();
    // normals_in_bottom[k] = normals among the k lowest-ranked.
    let mut normals_in_bottom = vec![0usize; n + 1];
    for k in 0..n {
        let idx = order[n - 1 - k];
        normals_in_bottom[k + 1] = normals_in_bottom[k] + usize::from(labels[idx] == Label::Normal);
    }
    debug_assert!(normals_in_bottom.windows(2).all(|w| w[1] >= w[0]));
    Ok((0..=100)
        .map(|i| {
            let r = curve_ratio(i);
            let k = ((r * n as f64).floor() as usize).min(n);
            (r, normals_in_bottom[k] as f64 / n_normal as f64)
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(out: W, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rejection_ratio", "false_rejection_rate"])?;
    for (r, f) in curve {
        w.write_record([format!("{r:.2}"), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Metrics CSV: `interval, acc, fpr, precision, recall, f1`; absent ratios
/// are empty cells.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["interval", "acc", "fpr", "precision", "recall", "f1"])?;
    for (interval, r) in rows {
        w.write_record([
            interval.clone(),
            opt(r.acc),
            opt(r.fpr),
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}
