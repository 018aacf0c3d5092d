//! Likelihood-ratio scoring: per-sequence `log P_n`, `log P_d`, their
//! difference, the attack posterior, rank-based rejection and per-IP
//! blacklists.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::HistogramModel;
use crate::ingest::{FlowKey, Label};
use crate::lstm::{SequenceModel, PROB_FLOOR};
use crate::tokenize::TokenizedSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

/// How an IP's sequence ratios are combined before comparing with the
/// rejection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
    Median,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "min" => Ok(Aggregation::Min),
            "median" => Ok(Aggregation::Median),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Estimated attack share of the mixture, in (0, 1).
    pub alpha: f64,
    pub rejection_ratio: f64,
    pub prob_floor: f64,
    pub aggregation: Aggregation,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            alpha: 0.5,
            rejection_ratio: 0.5,
            prob_floor: PROB_FLOOR,
            aggregation: Aggregation::Mean,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        check_rejection_ratio(self.rejection_ratio)?;
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0) {
            return Err(Error::Config(format!("prob_floor {} outside (0, 1)", self.prob_floor)));
        }
        Ok(())
    }
}

fn check_rejection_ratio(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("rejection ratio {r} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub flow: FlowKey,
    pub interval_index: usize,
    pub log_pn: f64,
    pub log_pd: f64,
    pub ratio: f64,
    pub posterior: f64,
    pub decision: Decision,
    pub label: Option<Label>,
}

/// `log` of the joint sequence-and-pair probability under one side.
fn joint_log_prob(model: &SequenceModel, hist: &HistogramModel, seq: &TokenizedSequence, floor: f64) -> Result<f64> {
    let lp = model.sequence_log_prob(seq)?;
    Ok(lp + hist.predict(&seq.static_pair).max(floor).ln())
}

pub fn score_n(model: &SequenceModel, hist: &HistogramModel, seq: &TokenizedSequence, floor: f64) -> Result<f64> {
    joint_log_prob(model, hist, seq, floor)
}

pub fn score_d(model: &SequenceModel, hist: &HistogramModel, seq: &TokenizedSequence, floor: f64) -> Result<f64> {
    joint_log_prob(model, hist, seq, floor)
}

/// Higher means more likely normal.
pub fn nd_ratio(log_pn: f64, log_pd: f64) -> f64 {
    log_pn - log_pd
}

/// `1 / (1 + ((1 - α) / α) · P_n / P_d)` without forming either probability.
pub fn attack_posterior(log_pn: f64, log_pd: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let r = log_pn - log_pd;
    if r.is_nan() {
        return Err(Error::Domain("log-probabilities give an undefined ratio".into()));
    }
    Ok(if r <= 0.0 {
        alpha / (alpha + (1.0 - alpha) * r.exp())
    } else {
        let e = (-r).exp();
        alpha * e / (alpha * e + (1.0 - alpha))
    })
}

/// A scored sequence, undecided (accepted) until thresholded.
pub fn score_sequence(
    n: (&SequenceModel, &HistogramModel),
    d: (&SequenceModel, &HistogramModel),
    seq: &TokenizedSequence,
    cfg: &ScoringConfig,
) -> Result<ScoredSequence> {
    let log_pn = score_n(n.0, n.1, seq, cfg.prob_floor)?;
    let log_pd = score_d(d.0, d.1, seq, cfg.prob_floor)?;
    Ok(ScoredSequence {
        flow: seq.flow.clone(),
        interval_index: seq.interval_index,
        log_pn,
        log_pd,
        ratio: nd_ratio(log_pn, log_pd),
        posterior: attack_posterior(log_pn, log_pd, cfg.alpha)?,
        decision: Decision::Accept,
        label: seq.label,
    })
}

pub fn score_all(
    n: (&SequenceModel, &HistogramModel),
    d: (&SequenceModel, &HistogramModel),
    seqs: &[TokenizedSequence],
    cfg: &ScoringConfig,
) -> Result<Vec<ScoredSequence>> {
    cfg.validate()?;
    seqs.iter().map(|s| score_sequence(n, d, s, cfg)).collect()
}

/// Indices of `scores` from most to least normal: descending score, ties by
/// flow key, then input position.
pub fn rank_order(scores: &[f64], flows: &[&FlowKey]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| flows[a].cmp(flows[b]))
            .then(a.cmp(&b))
    });
    order
}

/// Rejects the `⌊rejection_ratio · n⌋` lowest-ratio sequences and returns
/// the threshold: the smallest accepted ratio, or `+∞` when everything is
/// rejected.
pub fn rank_and_threshold(scored: &mut [ScoredSequence], rejection_ratio: f64) -> Result<f64> {
    check_rejection_ratio(rejection_ratio)?;
    let n = scored.len();
    let n_reject = ((rejection_ratio * n as f64).floor() as usize).min(n);
    let ratios: Vec<f64> = scored.iter().map(|s| s.ratio).collect();
    let flows: Vec<&FlowKey> = scored.iter().map(|s| &s.flow).collect();
    let order = rank_order(&ratios, &flows);
    let n_accept = n - n_reject;
    let mut decisions = vec![Decision::Accept; n];
    for &i in &order[n_accept..] {
        decisions[i] = Decision::Reject;
    }
    let threshold = if n_accept == 0 { f64::INFINITY } else { ratios[order[n_accept - 1]] };
    for (s, d) in scored.iter_mut().zip(decisions) {
        s.decision = d;
    }
    Ok(threshold)
}

/// Alternative to rank thresholding: reject when the posterior exceeds
/// `cutoff` (0.5 for the Bayes decision).
pub fn classify_by_posterior(scored: &mut [ScoredSequence], cutoff: f64) {
    for s in scored {
        s.decision = if s.posterior > cutoff { Decision::Reject } else { Decision::Accept };
    }
}

fn aggregate(values: &mut [f64], how: Aggregation) -> f64 {
    match how {
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::Median => {
            values.sort_by(f64::total_cmp);
            let m = values.len() / 2;
            if values.len() % 2 == 1 {
                values[m]
            } else {
                0.5 * (values[m - 1] + values[m])
            }
        }
    }
}

/// Source IPs whose aggregated ratio in `scored` (one interval) falls below
/// `threshold`. Sorted and deduplicated.
pub fn build_blacklist(scored: &[ScoredSequence], threshold: f64, how: Aggregation) -> Vec<String> {
    let mut by_ip: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in scored {
        by_ip.entry(s.flow.src_ip.as_str()).or_default().push(s.ratio);
    }
    by_ip
        .into_iter()
        .filter_map(|(ip, mut v)| (aggregate(&mut v, how) < threshold).then(|| ip.to_string()))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoredRow {
    interval: usize,
    src_ip: String,
    dst_ip: String,
    log_pn: f64,
    log_pd: f64,
    ratio: f64,
    posterior: f64,
    decision: Decision,
    label: Option<Label>,
}

pub fn write_scored_csv<W: Write>(out: W, scored: &[ScoredSequence]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in scored {
        w.serialize(ScoredRow {
            interval: s.interval_index,
            src_ip: s.flow.src_ip.clone(),
            dst_ip: s.flow.dst_ip.clone(),
            log_pn: s.log_pn,
            log_pd: s.log_pd,
            ratio: s.ratio,
            posterior: s.posterior,
            decision: s.decision,
            label: s.label,
        })?;
    }
    if scored.is_empty() {
        w.write_record([
            "interval",
            "src_ip",
            "dst_ip",
            "log_pn",
            "log_pd",
            "ratio",
            "posterior",
            "decision",
            "label",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scored_csv<R: Read>(input: R) -> Result<Vec<ScoredSequence>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: ScoredRow = row?;
        out.push(ScoredSequence {
            flow: FlowKey::new(row.src_ip, row.dst_ip),
            interval_index: row.interval,
            log_pn: row.log_pn,
            log_pd: row.log_pd,
            ratio: row.ratio,
            posterior: row.posterior,
            decision: row.decision,
            label: row.label,
        });
    }
    Ok(out)
}
