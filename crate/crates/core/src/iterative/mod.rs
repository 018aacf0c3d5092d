//! Pseudo-label classifier trained without attack labels: start by calling
//! all mixture traffic malicious, then repeatedly retrain and keep only the
//! most malicious-looking share as the attack side. Also the supervised
//! classifier used as an upper bound.

mod classifier;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::lstm::{fit, ModelConfig, OptimizerState};
use crate::tokenize::TokenizedSequence;

pub use classifier::{BinaryClassifier, Labeled};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` inside the loss.
pub const CLAMP: f64 = 1e-12;

/// What the retained attack share is taken of at each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RetainBase {
    /// The attack side of the previous round (monotone shrinkage).
    #[default]
    Current,
    /// All mixture sequences, every round.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeConfig {
    pub alpha: f64,
    pub retain_fraction: f64,
    pub max_iterations: usize,
    pub inner_epochs: usize,
    pub seed: u64,
    /// Reinitialize the classifier every round instead of continuing.
    pub restart: bool,
    pub retain_base: RetainBase,
    /// Relative loss improvement below which iteration stops.
    pub tolerance: f64,
    pub model: ModelConfig,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        IterativeConfig {
            alpha: 0.6,
            retain_fraction: 0.4,
            max_iterations: 10,
            inner_epochs: 1,
            seed: 0,
            restart: false,
            retain_base: RetainBase::Current,
            tolerance: 1e-4,
            model: ModelConfig::mixture_default(),
        }
    }
}

impl IterativeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "retain_fraction {} outside (0, 1]",
                self.retain_fraction
            )));
        }
        self.model.validate()
    }
}

/// Normal-period sequences labeled normal, mixture sequences labeled attack,
/// regardless of any true labels.
pub fn init_pseudo_labels<'a>(normal: &'a [TokenizedSequence], mixture: &'a [TokenizedSequence]) -> Vec<Labeled<'a>> {
    normal
        .iter()
        .map(|s| (s, false))
        .chain(mixture.iter().map(|s| (s, true)))
        .collect()
}

/// `⌈fraction · n⌉`, at least one element for any positive fraction.
pub fn select_count(n: usize, fraction: f64) -> usize {
    if n == 0 || fraction <= 0.0 {
        return 0;
    }
    (((fraction * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// Indices of the `⌈fraction · n⌉` highest probabilities, highest first,
/// ties by index.
pub fn select_top_by_probs(probs: &[f64], fraction: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(select_count(probs.len(), fraction));
    order
}

pub fn select_top(model: &BinaryClassifier, mixture: &[TokenizedSequence], fraction: f64) -> Result<Vec<usize>> {
    Ok(select_top_by_probs(&model.predict_all(mixture)?, fraction))
}

/// Three-term loss from predicted attack probabilities on the normal and
/// mixture sets. `alpha = 1` puts all of the mixture in the selected set.
pub fn loss_from_probs(p_normal: &[f64], p_mixture: &[f64], alpha: f64) -> Result<f64> {
    if p_normal.is_empty() || p_mixture.is_empty() {
        return Err(Error::Domain("loss needs non-empty normal and mixture sets".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1]")));
    }
    let clamp = |p: f64| p.clamp(CLAMP, 1.0 - CLAMP);
    let m = p_mixture.len() as f64;
    let normal_term = -p_normal.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / p_normal.len() as f64;
    let sel = select_top_by_probs(p_mixture, alpha);
    let mut in_sel = vec![false; p_mixture.len()];
    for &i in &sel {
        in_sel[i] = true;
    }
    let mut sel_sum = 0.0;
    let mut rest_sum = 0.0;
    for (i, &p) in p_mixture.iter().enumerate() {
        if in_sel[i] {
            sel_sum -= clamp(p).ln();
        } else {
            rest_sum -= (1.0 - clamp(p)).ln();
        }
    }
    let sel_term = sel_sum / (alpha * m);
    let rest_term = if rest_sum == 0.0 { 0.0 } else { rest_sum / ((1.0 - alpha) * m) };
    Ok(normal_term + sel_term + rest_term)
}

pub fn compute_loss(
    model: &BinaryClassifier,
    normal: &[TokenizedSequence],
    mixture: &[TokenizedSequence],
    alpha: f64,
) -> Result<f64> {
    loss_from_probs(&model.predict_all(normal)?, &model.predict_all(mixture)?, alpha)
}

/// Strict threshold: `p == threshold` is normal.
pub fn classify(model: &BinaryClassifier, seq: &TokenizedSequence, threshold: f64) -> Result<Label> {
    Ok(if model.predict(seq)? > threshold { Label::Attack } else { Label::Normal })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Size of the loss's selected set.
    pub selected: usize,
    /// Attack-side size used for this round's training.
    pub retained: usize,
    /// Accuracy and false-positive rate on the mixture's true labels, when
    /// every mixture sequence carries one.
    pub accuracy: Option<f64>,
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    /// Lowest-loss classifier seen, including the starting one.
    pub model: BinaryClassifier,
    pub initial_loss: Option<f64>,
    pub history: Vec<IterationRecord>,
}

/// Accuracy and false-positive rate of `p > 0.5` against true labels.
pub fn label_metrics(probs: &[f64], seqs: &[TokenizedSequence]) -> Option<(f64, f64)> {
    let labels: Option<Vec<Label>> = seqs.iter().map(|s| s.label).collect();
    let labels = labels?;
    if labels.is_empty() {
        return None;
    }
    let mut correct = 0usize;
    let mut fp = 0usize;
    let mut negatives = 0usize;
    for (&p, &l) in probs.iter().zip(&labels) {
        let attack = p > 0.5;
        if attack == (l == Label::Attack) {
            correct += 1;
        }
        if l == Label::Normal {
            negatives += 1;
            if attack {
                fp += 1;
            }
        }
    }
    let fpr = if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 };
    Some((correct as f64 / labels.len() as f64, fpr))
}

fn round_seed(base: u64, round: usize) -> u64 {
    base ^ (round as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Runs the train / re-predict / reduce loop starting from `model`.
pub fn iterate(
    model: BinaryClassifier,
    normal: &[TokenizedSequence],
    mixture: &[TokenizedSequence],
    cfg: &IterativeConfig,
) -> Result<IterationOutcome> {
    cfg.validate()?;
    if cfg.max_iterations == 0 {
        return Ok(IterationOutcome {
            model,
            initial_loss: None,
            history: Vec::new(),
        });
    }
    let initial = compute_loss(&model, normal, mixture, cfg.alpha)?;
    let mut best = (initial, model.clone());
    let mut current = model;
    let mut opt = OptimizerState::new(&current);
    let mut attack: Vec<bool> = vec![true; mixture.len()];
    let mut prev_loss = initial;
    let mut history = Vec::new();
    for round in 0..cfg.max_iterations {
        if cfg.restart && round > 0 {
            let mut mc = cfg.model;
            mc.seed = round_seed(cfg.model.seed, round);
            current = BinaryClassifier::new(mc)?;
            opt = OptimizerState::new(&current);
        }
        let train: Vec<Labeled> = normal
            .iter()
            .map(|s| (s, false))
            .chain(mixture.iter().zip(&attack).map(|(s, &a)| (s, a)))
            .collect();
        fit(&mut current, &mut opt, &train, &[], cfg.inner_epochs, round_seed(cfg.seed, round))?;

        let p_normal = current.predict_all(normal)?;
        let p_mixture = current.predict_all(mixture)?;
        let loss = loss_from_probs(&p_normal, &p_mixture, cfg.alpha)?;
        let metrics = label_metrics(&p_mixture, mixture);
        let retained = attack.iter().filter(|&&a| a).count();
        history.push(IterationRecord {
            iteration: round + 1,
            loss,
            selected: select_count(mixture.len(), cfg.alpha),
            retained,
            accuracy: metrics.map(|m| m.0),
            fpr: metrics.map(|m| m.1),
        });
        log::debug!("iteration {}: loss {loss:.6}, attack side {retained}", round + 1);
        if loss < best.0 {
            best = (loss, current.clone());
        }

        let pool: Vec<usize> = match cfg.retain_base {
            RetainBase::Current => (0..mixture.len()).filter(|&i| attack[i]).collect(),
            RetainBase::All => (0..mixture.len()).collect(),
        };
        let pool_probs: Vec<f64> = pool.iter().map(|&i| p_mixture[i]).collect();
        let mut next = vec![false; mixture.len()];
        for k in select_top_by_probs(&pool_probs, cfg.retain_fraction) {
            next[pool[k]] = true;
        }
        let improved = prev_loss - loss > cfg.tolerance * prev_loss.abs();
        if !improved || next == attack {
            break;
        }
        attack = next;
        prev_loss = loss;
    }
    Ok(IterationOutcome {
        model: best.1,
        initial_loss: Some(initial),
        history,
    })
}

/// Supervised baseline on true labels with the iterative model's total
/// epoch budget (`max_iterations · inner_epochs`).
pub fn train_full_classifier(
    normal: &[TokenizedSequence],
    mixture: &[TokenizedSequence],
    cfg: &IterativeConfig,
) -> Result<BinaryClassifier> {
    cfg.validate()?;
    let mut train: Vec<Labeled> = normal.iter().map(|s| (s, false)).collect();
    for s in mixture {
        let label = s
            .label
            .ok_or_else(|| Error::MissingField("label (full classifier needs every mixture label)".into()))?;
        train.push((s, label == Label::Attack));
    }
    let mut model = BinaryClassifier::new(cfg.model)?;
    let mut opt = OptimizerState::new(&model);
    let epochs = cfg.max_iterations * cfg.inner_epochs;
    fit(&mut model, &mut opt, &train, &[], epochs, cfg.seed)?;
    Ok(model)
}

/// Fresh classifier from the config's model settings.
pub fn new_classifier(cfg: &IterativeConfig) -> Result<BinaryClassifier> {
    BinaryClassifier::new(cfg.model)
}

pub fn write_history_csv<W: Write>(out: W, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "loss", "selected", "retained", "accuracy", "fpr"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            r.loss.to_string(),
            r.selected.to_string(),
            r.retained.to_string(),
            opt(r.accuracy),
            opt(r.fpr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic shuffle helper used by experiment code to split data.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}
