use super::extended::{sequence_nll, Dd};
use super::model::SequenceModel;
use super::train::{batch_gradient, mean_loss, Trainable};
use crate::error::Result;
use crate::tokenize::TokenizedSequence;

/// A model whose loss can also be evaluated in double-double precision from
/// an explicit parameter list (same order as [`Parameters::tensors`]).
///
/// [`Parameters::tensors`]: super::Parameters::tensors
pub trait ReferenceLoss<E>: Trainable<E> {
    /// Summed loss of one example; must agree with [`Trainable::loss`].
    fn reference_loss(&self, params: &[Vec<Dd>], example: &E) -> Result<Dd>;
}

impl<'a> ReferenceLoss<&'a TokenizedSequence> for SequenceModel {
    fn reference_loss(&self, params: &[Vec<Dd>], example: &&'a TokenizedSequence) -> Result<Dd> {
        self.check_sequence(example)?;
        Ok(sequence_nll(params, &self.config, example.observed()))
    }
}

/// Outcome of comparing analytic gradients to central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Central difference of the mean batch loss w.r.t. one parameter entry.
pub fn finite_difference<M: Trainable<E>, E>(
    model: &M,
    batch: &[E],
    tensor: usize,
    index: usize,
    eps: f64,
) -> Result<f64> {
    let mut probe = model.clone();
    let original = probe.tensors()[tensor].data[index];
    probe.tensors_mut()[tensor][index] = original + eps;
    let plus = mean_loss(&probe, batch)?;
    probe.tensors_mut()[tensor][index] = original - eps;
    let minus = mean_loss(&probe, batch)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Central difference like [`finite_difference`], with the two losses
/// evaluated in double-double precision so that round-off does not mask
/// small gradients. The divisor is the realized step `(θ+eps) - (θ-eps)`.
pub fn reference_difference<M: ReferenceLoss<E>, E>(
    model: &M,
    batch: &[E],
    tensor: usize,
    index: usize,
    eps: f64,
) -> Result<f64> {
    let total: usize = batch.iter().map(M::weight).sum();
    let mut params: Vec<Vec<Dd>> = model
        .tensors()
        .iter()
        .map(|t| t.data.iter().map(|&v| Dd::from(v)).collect())
        .collect();
    let original = params[tensor][index].hi;
    let (up, down) = (original + eps, original - eps);
    let mut mean = |v: f64| -> Result<Dd> {
        params[tensor][index] = Dd::from(v);
        let mut sum = Dd::ZERO;
        for ex in batch {
            sum = sum + model.reference_loss(&params, ex)?;
        }
        Ok(sum / Dd::from(total as f64))
    };
    let diff = mean(up)? - mean(down)?;
    Ok((diff / Dd::from(up - down)).to_f64())
}

/// Checks every parameter: `|g_a - g_f| / max(|g_a|, |g_f|, 1e-8)`, with
/// `g_f` from [`reference_difference`].
/// Intended for tiny models only; cost is two forward passes per parameter.
pub fn grad_check<M: ReferenceLoss<E>, E>(model: &M, batch: &[E], eps: f64) -> Result<GradCheck> {
    let (_, analytic) = batch_gradient(model, batch)?;
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    let names: Vec<String> = model.tensors().into_iter().map(|t| t.name).collect();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    for (ti, grads) in analytic.iter().enumerate() {
        for (j, &ga) in grads.iter().enumerate() {
            let gf = reference_difference(model, batch, ti, j, eps)?;
            let denom = ga.abs().max(gf.abs()).max(1e-8);
            let err = (ga - gf).abs() / denom;
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (names[ti].clone(), j);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FlowKey, StaticPair};
    use crate::lstm::{ModelConfig, Parameters, Role, SequenceModel};
    use crate::tokenize::TokenizedSequence;

    fn seq(tokens: &[u32], t: usize) -> TokenizedSequence {
        let mut padded = tokens.to_vec();
        padded.resize(t, 0);
        TokenizedSequence {
            tokens: padded,
            true_len: tokens.len(),
            flow: FlowKey::new("a", "b"),
            static_pair: StaticPair::default(),
            interval_index: 0,
            label: None,
        }
    }

    fn tiny() -> SequenceModel {
        let cfg = ModelConfig {
            m_vocab: 10,
            embed_dim: 3,
            hidden_dim: 4,
            layers: 2,
            seed: 21,
            ..ModelConfig::normal_default()
        };
        SequenceModel::new(cfg, Role::N).unwrap()
    }

    #[test]
    fn unused_embedding_rows_have_zero_error() {
        let model = tiny();
        let a = seq(&[1, 2, 3, 2], 6);
        let b = seq(&[3, 1, 4], 6);
        let batch = [&a, &b];
        // Token 9 never appears as an input, so its embedding row is unused.
        let e = model.backbone.embed_dim();
        for j in 9 * e..10 * e {
            assert_eq!(finite_difference(&model, &batch, 0, j, 1e-5).unwrap(), 0.0);
        }
        let (_, g) = batch_gradient(&model, &batch).unwrap();
        assert!(g.backbone.embedding.row(9).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reference_loss_matches_forward() {
        let model = tiny();
        let s = seq(&[1, 2, 3, 2, 5], 6);
        let params: Vec<Vec<Dd>> = model
            .tensors()
            .iter()
            .map(|t| t.data.iter().map(|&v| Dd::from(v)).collect())
            .collect();
        let fast = model.nll(&s).unwrap();
        let slow = model.reference_loss(&params, &&s).unwrap().to_f64();
        assert!((fast - slow).abs() < 1e-13, "{fast} vs {slow}");
    }

    #[test]
    fn reference_difference_agrees_with_plain_difference() {
        let model = tiny();
        let a = seq(&[1, 2, 3, 2, 5], 6);
        let batch = [&a];
        for ti in 0..model.tensors().len() {
            let plain = finite_difference(&model, &batch, ti, 1, 1e-5).unwrap();
            let precise = reference_difference(&model, &batch, ti, 1, 1e-5).unwrap();
            assert!((plain - precise).abs() < 1e-9, "tensor {ti}: {plain} vs {precise}");
        }
    }

    #[test]
    fn tiny_model_passes_grad_check() {
        let model = tiny();
        let (a, b) = (seq(&[1, 2, 3, 2], 6), seq(&[3, 1, 4, 8, 8, 9], 6));
        let report = grad_check(&model, &[&a, &b], 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");
        assert_eq!(report.checked, model.tensors().iter().map(|t| t.data.len()).sum::<usize>());
    }

    #[test]
    fn richardson_doubling_is_second_order() {
        let model = tiny();
        let a = seq(&[1, 2, 3, 2, 5], 6);
        let batch = [&a];
        let (_, g) = batch_gradient(&model, &batch).unwrap();
        let n_tensors = g.tensors().len();
        for ti in 0..n_tensors {
            let fd1 = finite_difference(&model, &batch, ti, 0, 1e-5).unwrap();
            let fd2 = finite_difference(&model, &batch, ti, 0, 2e-5).unwrap();
            // Truncation error scales as eps^2 (~1e-10 here); round-off
            // adds ~1e-11 / eps.
            assert!((fd1 - fd2).abs() < 1e-8, "tensor {ti}: {fd1} vs {fd2}");
        }
    }
}
