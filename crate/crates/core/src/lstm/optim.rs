use super::tensor::Parameters;
use super::OptimizerKind;

/// Adam moment accumulators, one vector per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        OptimizerState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn apply<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64, kind: OptimizerKind) {
        self.step += 1;
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        assert_eq!(params.len(), self.first.len(), "optimizer state does not match the model");
        match kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (pv, gv) in p.iter_mut().zip(g.data) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powi(self.step.min(i32::MAX as u64) as i32);
                let c2 = 1.0 - b2.powi(self.step.min(i32::MAX as u64) as i32);
                for (ti, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                    let m = &mut self.first[ti];
                    let v = &mut self.second[ti];
                    for j in 0..p.len() {
                        let gj = g.data[j];
                        m[j] = b1 * m[j] + (1.0 - b1) * gj;
                        v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping. `max_norm == 0` disables clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}
