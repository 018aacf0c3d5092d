use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backbone::Backbone;
use super::tensor::{axpy, dot, log_softmax, softmax, Matrix, ParamRef, Parameters};
use super::{ModelConfig, Role};
use crate::error::{Error, Result};
use crate::tokenize::{TokenizedSequence, PAD_ID};

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Next-token model: embedding, stacked LSTM, softmax projection over the
/// token vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    pub config: ModelConfig,
    pub role: Role,
    pub backbone: Backbone,
    /// `m_vocab × hidden_dim`
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

impl SequenceModel {
    pub fn new(config: ModelConfig, role: Role) -> Result<Self> {
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
        let out_w = Matrix::uniform(config.m_vocab, config.hidden_dim, bound, &mut rng);
        let out_b = Matrix::uniform(1, config.m_vocab, bound, &mut rng).data;
        Ok(SequenceModel {
            config,
            role,
            backbone,
            out_w,
            out_b,
        })
    }

    /// Same shapes as `config`, every parameter zero.
    pub fn zeros(config: ModelConfig, role: Role) -> Self {
        SequenceModel {
            config,
            role,
            backbone: Backbone::zeros(config.m_vocab, config.embed_dim, config.hidden_dim, config.layers),
            out_w: Matrix::zeros(config.m_vocab, config.hidden_dim),
            out_b: vec![0.0; config.m_vocab],
        }
    }

    pub fn zeros_like(&self) -> Self {
        SequenceModel::zeros(self.config, self.role)
    }

    pub(crate) fn check_sequence(&self, seq: &TokenizedSequence) -> Result<()> {
        validate_tokens(seq, self.config.m_vocab)
    }

    /// Inputs are the start symbol followed by all but the last observed token.
    fn inputs(seq: &TokenizedSequence) -> Vec<u32> {
        let mut inputs = Vec::with_capacity(seq.true_len);
        inputs.push(PAD_ID);
        inputs.extend_from_slice(&seq.tokens[..seq.true_len - 1]);
        inputs
    }

    fn logits(&self, h: &[f64], out: &mut [f64]) {
        for (v, o) in out.iter_mut().enumerate() {
            *o = self.out_b[v] + dot(self.out_w.row(v), h);
        }
    }

    /// Distribution over the token at each position `t < true_len`,
    /// conditioned on the start symbol and tokens before `t`.
    pub fn forward_sequence(&self, seq: &TokenizedSequence) -> Result<Vec<Vec<f64>>> {
        self.check_sequence(seq)?;
        let inputs = Self::inputs(seq);
        let trace = self.backbone.forward(&inputs);
        let top = trace.top();
        let mut logits = vec![0.0; self.config.m_vocab];
        Ok((0..seq.true_len)
            .map(|t| {
                self.logits(top.h_at(t), &mut logits);
                softmax(&logits)
            })
            .collect())
    }

    /// Exact `log P(x_t | x_0 .. x_{t-1})` for each observed position.
    pub fn step_log_probs(&self, seq: &TokenizedSequence) -> Result<Vec<f64>> {
        self.check_sequence(seq)?;
        let inputs = Self::inputs(seq);
        let trace = self.backbone.forward(&inputs);
        let top = trace.top();
        let m = self.config.m_vocab;
        let mut logits = vec![0.0; m];
        let mut logp = vec![0.0; m];
        Ok((0..seq.true_len)
            .map(|t| {
                self.logits(top.h_at(t), &mut logits);
                log_softmax(&logits, &mut logp);
                logp[seq.tokens[t] as usize]
            })
            .collect())
    }

    /// Natural-log probability of the observed tokens; padding contributes
    /// nothing and each step probability is floored at [`PROB_FLOOR`].
    pub fn sequence_log_prob(&self, seq: &TokenizedSequence) -> Result<f64> {
        let floor = PROB_FLOOR.ln();
        Ok(self.step_log_probs(seq)?.into_iter().map(|lp| lp.max(floor)).sum())
    }

    /// Adds `scale ·` d(sum of step losses)/dθ into `grad` and returns the
    /// unscaled summed negative log-likelihood.
    pub(crate) fn accumulate(&self, seq: &TokenizedSequence, scale: f64, grad: &mut SequenceModel) -> Result<f64> {
        self.check_sequence(seq)?;
        let inputs = Self::inputs(seq);
        let len = inputs.len();
        let hd = self.config.hidden_dim;
        let m = self.config.m_vocab;
        let trace = self.backbone.forward(&inputs);
        let top = trace.top();
        let mut logits = vec![0.0; m];
        let mut logp = vec![0.0; m];
        let mut dh_top = vec![0.0; len * hd];
        let mut loss = 0.0;
        for t in 0..len {
            let h = top.h_at(t);
            self.logits(h, &mut logits);
            log_softmax(&logits, &mut logp);
            let target = seq.tokens[t] as usize;
            loss -= logp[target];
            let dh = &mut dh_top[t * hd..(t + 1) * hd];
            for v in 0..m {
                let d = scale * (logp[v].exp() - if v == target { 1.0 } else { 0.0 });
                grad.out_b[v] += d;
                axpy(d, h, grad.out_w.row_mut(v));
                axpy(d, self.out_w.row(v), dh);
            }
        }
        self.backbone.backward(&inputs, &trace, dh_top, &mut grad.backbone);
        Ok(loss)
    }

    pub(crate) fn nll(&self, seq: &TokenizedSequence) -> Result<f64> {
        Ok(-self.step_log_probs(seq)?.into_iter().sum::<f64>())
    }
}

impl Parameters for SequenceModel {
    fn tensors(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        self.backbone.push_tensors(&mut out);
        out.push(ParamRef {
            name: "out.w".into(),
            shape: self.out_w.shape().to_vec(),
            data: &self.out_w.data,
        });
        out.push(ParamRef {
            name: "out.b".into(),
            shape: vec![self.out_b.len()],
            data: &self.out_b,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.backbone.push_tensors_mut(&mut out);
        out.push(&mut self.out_w.data);
        out.push(&mut self.out_b);
        out
    }
}

/// Checks `1 <= true_len <= T` and that every observed id is in `[1, m_vocab)`.
pub(crate) fn validate_tokens(seq: &TokenizedSequence, m_vocab: usize) -> Result<()> {
    if seq.true_len == 0 || seq.true_len > seq.tokens.len() {
        return Err(Error::Domain(format!(
            "true_len {} outside [1, {}]",
            seq.true_len,
            seq.tokens.len()
        )));
    }
    let m = m_vocab as u32;
    if let Some(&bad) = seq.observed().iter().find(|&&t| t >= m || t == PAD_ID) {
        return Err(Error::Domain(format!("token id {bad} outside [1, {m})")));
    }
    Ok(())
}

/// Copies the source embedding into `target` and tags it as the mixture
/// model. Nothing else in `target` changes.
pub fn transfer_embedding(source: &SequenceModel, target: &mut SequenceModel) -> Result<()> {
    let (s, t) = (&source.backbone.embedding, &target.backbone.embedding);
    if s.shape() != t.shape() {
        return Err(Error::Shape(format!(
            "embedding {:?} cannot be transferred into {:?}",
            s.shape(),
            t.shape()
        )));
    }
    target.backbone.embedding.data.copy_from_slice(&source.backbone.embedding.data);
    target.role = Role::D;
    Ok(())
}
