//! The three-stage protocol: pretrain the normal model offline, then for
//! each interval of the mixture train the mixture model on that interval
//! and score it.

use std::time::Instant;

use super::config::Settings;
use super::metrics::{evaluate_scored, EvalReport};
use crate::error::{Error, Result};
use crate::histogram::HistogramModel;
use crate::ingest::{build_sequences, split_intervals, IngestConfig, PacketRecord};
use crate::iterative::shuffled_indices;
use crate::lstm::checkpoint::{Checkpoint, StoredModel};
use crate::lstm::{fit, transfer_embedding, EpochStats, ModelConfig, OptimizerState, Role, SequenceModel};
use crate::scoring::{build_blacklist, rank_and_threshold, score_all, ScoredSequence, ScoringConfig};
use crate::tokenize::{encode_all, TokenizedSequence};

/// Deterministic train/validation split of `items` by fractions.
pub fn split_train_val<T: Clone>(items: &[T], train: f64, val: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let order = shuffled_indices(items.len(), seed);
    let n_train = (train * items.len() as f64).round() as usize;
    let n_val = ((val * items.len() as f64).round() as usize).min(items.len() - n_train.min(items.len()));
    let n_train = n_train.min(items.len());
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect();
    (pick(&order[..n_train]), pick(&order[n_train..n_train + n_val]))
}

/// Tokenized sequences of all records treated as one batch.
pub fn tokenize_records(records: &[PacketRecord], settings: &Settings) -> Vec<TokenizedSequence> {
    encode_all(&build_sequences(records, &settings.ingest, 0), &settings.hasher)
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
    pub n_train: usize,
    pub n_val: usize,
}

/// Trains the normal model and its histogram on the normal-period records.
pub fn pretrain_n(records: &[PacketRecord], settings: &Settings) -> Result<PretrainOutput> {
    settings.validate()?;
    let seqs = tokenize_records(records, settings);
    if seqs.is_empty() {
        return Err(Error::Domain("no normal sequences to train on".into()));
    }
    pretrain_n_sequences(&seqs, settings)
}

pub fn pretrain_n_sequences(seqs: &[TokenizedSequence], settings: &Settings) -> Result<PretrainOutput> {
    let run = &settings.run;
    let (train, val) = split_train_val(seqs, run.n_train_fraction, run.n_val_fraction, run.seed);
    let hist = HistogramModel::fit(train.iter().map(|s| &s.static_pair), run.smoothing);
    let mut model = SequenceModel::new(settings.n_model, Role::N)?;
    let mut opt = OptimizerState::new(&model);
    let train_refs: Vec<&TokenizedSequence> = train.iter().collect();
    let val_refs: Vec<&TokenizedSequence> = val.iter().collect();
    let history = fit(&mut model, &mut opt, &train_refs, &val_refs, settings.n_model.epochs, run.seed)?;
    for s in &history {
        log::info!("N epoch {}: train {:.4}, val {:?}", s.epoch, s.train_loss, s.val_loss);
    }
    Ok(PretrainOutput {
        checkpoint: Checkpoint {
            model: StoredModel::Sequence(model),
            hasher: settings.hasher,
            histogram: Some(hist),
            optimizer: Some(opt),
        },
        history,
        n_train: train.len(),
        n_val: val.len(),
    })
}

/// A mixture model initialized with `n`'s embedding.
pub fn init_mixture_model(n: &SequenceModel, cfg: ModelConfig) -> Result<SequenceModel> {
    let mut d = SequenceModel::new(cfg, Role::D)?;
    transfer_embedding(n, &mut d)?;
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct IntervalResult {
    pub index: usize,
    pub scored: Vec<ScoredSequence>,
    /// Source IPs to block from the next interval on.
    pub blacklist: Vec<String>,
    pub threshold: f64,
    pub d_history: Vec<EpochStats>,
    pub report: Option<EvalReport>,
    pub train_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineOutput {
    pub intervals: Vec<IntervalResult>,
    pub d_model: SequenceModel,
    pub d_hist: HistogramModel,
}

impl OnlineOutput {
    pub fn all_scored(&self) -> Vec<ScoredSequence> {
        self.intervals.iter().flat_map(|i| i.scored.iter().cloned()).collect()
    }
}

fn n_parts(ckpt: &Checkpoint, settings: &Settings) -> Result<(SequenceModel, HistogramModel)> {
    if ckpt.hasher != settings.hasher {
        return Err(Error::Vocabulary(format!(
            "normal model was built with {:?}, data is tokenized with {:?}",
            ckpt.hasher, settings.hasher
        )));
    }
    let StoredModel::Sequence(n) = &ckpt.model else {
        return Err(Error::Shape("normal checkpoint holds a classifier".into()));
    };
    if n.config.m_vocab != settings.d_model.m_vocab {
        return Err(Error::Vocabulary(format!(
            "normal model vocabulary {} differs from mixture model vocabulary {}",
            n.config.m_vocab, settings.d_model.m_vocab
        )));
    }
    let hist = ckpt
        .histogram
        .clone()
        .ok_or_else(|| Error::MissingField("normal checkpoint has no histogram".into()))?;
    Ok((n.clone(), hist))
}

/// Runs the online stage over the mixture records. Interval `i` trains the
/// mixture model on interval `i` (continuing from interval `i - 1`) and
/// scores interval `i`; its blacklist is meant for interval `i + 1`.
pub fn online_run(mixture: Vec<PacketRecord>, n_ckpt: &Checkpoint, settings: &Settings) -> Result<OnlineOutput> {
    settings.validate()?;
    let (n, n_hist) = n_parts(n_ckpt, settings)?;
    let run = settings.run;
    let ingest = IngestConfig {
        interval_minutes: run.interval_minutes,
        ..settings.ingest
    };
    let scoring = ScoringConfig {
        alpha: run.alpha,
        rejection_ratio: run.rejection_ratio,
        aggregation: run.aggregation,
        ..ScoringConfig::default()
    };
    let stream = split_intervals(mixture, &ingest);
    let mut d = init_mixture_model(&n, settings.d_model)?;
    let mut opt = OptimizerState::new(&d);
    let mut d_hist = HistogramModel::new(run.smoothing);
    let mut intervals = Vec::with_capacity(stream.len());
    for (i, batch) in stream.intervals.iter().enumerate() {
        let seqs = encode_all(&build_sequences(batch, &ingest, i), &settings.hasher);
        if run.restart_d && i > 0 {
            d = init_mixture_model(&n, settings.d_model)?;
            opt = OptimizerState::new(&d);
        }
        let start = Instant::now();
        let interval_seed = run.seed ^ ((i as u64 + 1) << 32);
        let (train, val) = split_train_val(&seqs, run.d_train_fraction, run.d_val_fraction, interval_seed);
        let train_refs: Vec<&TokenizedSequence> = train.iter().collect();
        let val_refs: Vec<&TokenizedSequence> = val.iter().collect();
        let d_history = if train_refs.is_empty() {
            Vec::new()
        } else {
            fit(&mut d, &mut opt, &train_refs, &val_refs, run.d_epochs_per_interval, interval_seed)?
        };
        for s in &seqs {
            d_hist.update(&s.static_pair);
        }
        let train_seconds = start.elapsed().as_secs_f64();
        if train_seconds > run.interval_minutes * 60.0 {
            log::warn!(
                "interval {i}: training took {train_seconds:.1}s, longer than the {} minute interval",
                run.interval_minutes
            );
        }

        let mut scored = score_all((&n, &n_hist), (&d, &d_hist), &seqs, &scoring)?;
        let threshold = rank_and_threshold(&mut scored, run.rejection_ratio)?;
        let blacklist = build_blacklist(&scored, threshold, run.aggregation);
        let report = if !scored.is_empty() && scored.iter().all(|s| s.label.is_some()) {
            Some(evaluate_scored(&scored)?)
        } else {
            None
        };
        log::info!(
            "interval {i}: {} sequences, {} blacklisted, fpr {:?}",
            scored.len(),
            blacklist.len(),
            report.and_then(|r| r.fpr)
        );
        intervals.push(IntervalResult {
            index: i,
            scored,
            blacklist,
            threshold,
            d_history,
            report,
            train_seconds,
        });
    }
    Ok(OnlineOutput {
        intervals,
        d_model: d,
        d_hist,
    })
}
