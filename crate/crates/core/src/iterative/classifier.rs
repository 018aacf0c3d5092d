use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::lstm::extended::{classifier_loss, Dd};
use crate::lstm::{
    sigmoid, softplus, validate_tokens, Backbone, BackboneTrace, Matrix, ModelConfig, ParamRef, Parameters, ReferenceLoss,
    Trainable,
};
use crate::tokenize::TokenizedSequence;

/// Sequence classifier: the sequence-model backbone read out at the last
/// observed step through a single logistic unit. `predict` is the
/// probability that the sequence is an attack.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifier {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// A training example: a sequence and whether it is labeled attack.
pub type Labeled<'a> = (&'a TokenizedSequence, bool);

impl BinaryClassifier {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let backbone = Backbone::random(
            config.m_vocab,
            config.embed_dim,
            config.hidden_dim,
            config.layers,
            &mut rng,
        );
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let head = Matrix::uniform(1, config.hidden_dim + 1, bound, &mut rng).data;
        Ok(BinaryClassifier {
            config,
            backbone,
            head_w: head[..config.hidden_dim].to_vec(),
            head_b: vec![head[config.hidden_dim]],
        })
    }

    pub fn zeros(config: ModelConfig) -> Self {
        BinaryClassifier {
            config,
            backbone: Backbone::zeros(config.m_vocab, config.embed_dim, config.hidden_dim, config.layers),
            head_w: vec![0.0; config.hidden_dim],
            head_b: vec![0.0],
        }
    }

    fn logit_with_trace(&self, seq: &TokenizedSequence) -> Result<(f64, BackboneTrace)> {
        validate_tokens(seq, self.config.m_vocab)?;
        let trace = self.backbone.forward(seq.observed());
        let h = trace.top().h_at(seq.true_len - 1);
        let z = self.head_b[0] + h.iter().zip(&self.head_w).map(|(a, b)| a * b).sum::<f64>();
        Ok((z, trace))
    }

    pub fn logit(&self, seq: &TokenizedSequence) -> Result<f64> {
        Ok(self.logit_with_trace(seq)?.0)
    }

    /// Predicted attack probability, strictly inside (0, 1) for finite logits.
    pub fn predict(&self, seq: &TokenizedSequence) -> Result<f64> {
        Ok(sigmoid(self.logit(seq)?))
    }

    pub fn predict_all(&self, seqs: &[TokenizedSequence]) -> Result<Vec<f64>> {
        seqs.iter().map(|s| self.predict(s)).collect()
    }
}

impl Parameters for BinaryClassifier {
    fn tensors(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        self.backbone.push_tensors(&mut out);
        out.push(ParamRef {
            name: "head.w".into(),
            shape: vec![self.head_w.len()],
            data: &self.head_w,
        });
        out.push(ParamRef {
            name: "head.b".into(),
            shape: vec![1],
            data: &self.head_b,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.backbone.push_tensors_mut(&mut out);
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }
}

impl<'a> Trainable<Labeled<'a>> for BinaryClassifier {
    fn model_config(&self) -> &ModelConfig {
        &self.config
    }

    fn zero_grad(&self) -> Self {
        BinaryClassifier::zeros(self.config)
    }

    fn weight(_: &Labeled<'a>) -> usize {
        1
    }

    fn accumulate(&self, example: &Labeled<'a>, scale: f64, grad: &mut Self) -> Result<f64> {
        let (seq, target) = *example;
        let (z, trace) = self.logit_with_trace(seq)?;
        let y = if target { 1.0 } else { 0.0 };
        let dz = scale * (sigmoid(z) - y);
        let len = seq.true_len;
        let hd = self.config.hidden_dim;
        let h = trace.top().h_at(len - 1);
        for k in 0..hd {
            grad.head_w[k] += dz * h[k];
        }
        grad.head_b[0] += dz;
        let mut dh_top = vec![0.0; len * hd];
        for k in 0..hd {
            dh_top[(len - 1) * hd + k] = dz * self.head_w[k];
        }
        self.backbone.backward(seq.observed(), &trace, dh_top, &mut grad.backbone);
        Ok(softplus(z) - y * z)
    }

    fn loss(&self, example: &Labeled<'a>) -> Result<f64> {
        let (seq, target) = *example;
        let z = self.logit(seq)?;
        Ok(softplus(z) - if target { z } else { 0.0 })
    }
}

impl<'a> ReferenceLoss<Labeled<'a>> for BinaryClassifier {
    fn reference_loss(&self, params: &[Vec<Dd>], example: &Labeled<'a>) -> Result<Dd> {
        let (seq, target) = *example;
        validate_tokens(seq, self.config.m_vocab)?;
        Ok(classifier_loss(params, &self.config, seq.observed(), target))
    }
}
