use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::SequenceModel;
use super::optim::{clip_global_norm, OptimizerState};
use super::tensor::Parameters;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tokenize::TokenizedSequence;

/// A model trainable on examples of type `E` by mean-loss minimization.
pub trait Trainable<E>: Parameters + Clone {
    fn model_config(&self) -> &ModelConfig;

    fn zero_grad(&self) -> Self;

    /// Number of loss terms `example` contributes (steps for a sequence
    /// model, one for a classifier).
    fn weight(example: &E) -> usize;

    /// Adds `scale ·` gradient of the summed example loss into `grad` and
    /// returns that summed loss.
    fn accumulate(&self, example: &E, scale: f64, grad: &mut Self) -> Result<f64>;

    /// Summed loss of one example, forward pass only.
    fn loss(&self, example: &E) -> Result<f64>;
}

impl<'a> Trainable<&'a TokenizedSequence> for SequenceModel {
    fn model_config(&self) -> &ModelConfig {
        &self.config
    }

    fn zero_grad(&self) -> Self {
        self.zeros_like()
    }

    fn weight(example: &&'a TokenizedSequence) -> usize {
        example.true_len
    }

    fn accumulate(&self, example: &&'a TokenizedSequence, scale: f64, grad: &mut Self) -> Result<f64> {
        SequenceModel::accumulate(self, example, scale, grad)
    }

    fn loss(&self, example: &&'a TokenizedSequence) -> Result<f64> {
        self.nll(example)
    }
}

/// Mean loss and the matching gradient over `batch`.
pub fn batch_gradient<M: Trainable<E>, E>(model: &M, batch: &[E]) -> Result<(f64, M)> {
    let total: usize = batch.iter().map(M::weight).sum();
    if total == 0 {
        return Err(Error::Domain("batch has no loss terms".into()));
    }
    let scale = 1.0 / total as f64;
    let mut grad = model.zero_grad();
    let mut loss = 0.0;
    for ex in batch {
        loss += model.accumulate(ex, scale, &mut grad)?;
    }
    Ok((loss * scale, grad))
}

/// One optimizer update on `batch`; returns the mean loss before the update.
pub fn train_step<M: Trainable<E>, E>(model: &mut M, batch: &[E], opt: &mut OptimizerState) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("empty training batch".into()));
    }
    let (loss, mut grad) = batch_gradient(model, batch)?;
    if !loss.is_finite() {
        let block = model
            .first_non_finite()
            .or_else(|| grad.first_non_finite())
            .unwrap_or_else(|| "loss".into());
        return Err(Error::NonFinite { block });
    }
    if let Some(block) = grad.first_non_finite() {
        return Err(Error::NonFinite { block });
    }
    let cfg = *model.model_config();
    clip_global_norm(&mut grad, cfg.clip_norm);
    opt.apply(model, &grad, cfg.learning_rate, cfg.optimizer);
    if let Some(block) = model.first_non_finite() {
        return Err(Error::NonFinite { block });
    }
    Ok(loss)
}

/// Weighted mean loss over `data` (per step for sequence models).
pub fn mean_loss<M: Trainable<E>, E>(model: &M, data: &[E]) -> Result<f64> {
    let total: usize = data.iter().map(M::weight).sum();
    if total == 0 {
        return Err(Error::Domain("no loss terms to evaluate".into()));
    }
    let mut sum = 0.0;
    for ex in data {
        sum += model.loss(ex)?;
    }
    Ok(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Runs `epochs` passes of shuffled mini-batches. The shuffle for epoch `e`
/// is seeded from `(shuffle_seed, e)`, so runs are reproducible.
pub fn fit<M: Trainable<E>, E: Clone>(
    model: &mut M,
    opt: &mut OptimizerState,
    train: &[E],
    val: &[E],
    epochs: usize,
    shuffle_seed: u64,
) -> Result<Vec<EpochStats>> {
    let batch_size = model.model_config().batch_size.max(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stats = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut weight = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<E> = chunk.iter().map(|&i| train[i].clone()).collect();
            let w: usize = batch.iter().map(M::weight).sum();
            weighted += train_step(model, &batch, opt)? * w as f64;
            weight += w;
        }
        let val_loss = if val.is_empty() { None } else { Some(mean_loss(model, val)?) };
        stats.push(EpochStats {
            epoch: epoch + 1,
            train_loss: if weight > 0 { weighted / weight as f64 } else { f64::NAN },
            val_loss,
        });
    }
    Ok(stats)
}
