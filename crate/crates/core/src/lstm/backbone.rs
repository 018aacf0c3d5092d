use rand::Rng;

use super::cell::{LayerTrace, LstmLayer};
use super::tensor::{axpy, Matrix, ParamRef};

/// Token embedding followed by stacked LSTM layers. Shared by the sequence
/// models and the binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub embedding: Matrix,
    pub layers: Vec<LstmLayer>,
}

pub struct BackboneTrace {
    pub len: usize,
    pub embedded: Vec<f64>,
    pub layers: Vec<LayerTrace>,
}

impl BackboneTrace {
    /// Hidden states of the top layer (`len × H`).
    pub fn top(&self) -> &LayerTrace {
        self.layers.last().expect("at least one layer")
    }
}

impl Backbone {
    pub fn zeros(m_vocab: usize, embed_dim: usize, hidden_dim: usize, layers: usize) -> Self {
        Backbone {
            embedding: Matrix::zeros(m_vocab, embed_dim),
            layers: (0..layers)
                .map(|l| LstmLayer::zeros(if l == 0 { embed_dim } else { hidden_dim }, hidden_dim))
                .collect(),
        }
    }

    /// Embedding rows uniform in `±1` (an embedding lookup has fan-in 1),
    /// LSTM tensors as in [`LstmLayer::random`].
    pub fn random<R: Rng>(m_vocab: usize, embed_dim: usize, hidden_dim: usize, layers: usize, rng: &mut R) -> Self {
        let embedding = Matrix::uniform(m_vocab, embed_dim, 1.0, rng);
        let layers = (0..layers)
            .map(|l| LstmLayer::random(if l == 0 { embed_dim } else { hidden_dim }, hidden_dim, rng))
            .collect();
        Backbone { embedding, layers }
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden_dim)
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols
    }

    pub fn m_vocab(&self) -> usize {
        self.embedding.rows
    }

    pub fn forward(&self, inputs: &[u32]) -> BackboneTrace {
        let len = inputs.len();
        let e = self.embed_dim();
        let mut embedded = Vec::with_capacity(len * e);
        for &tok in inputs {
            embedded.extend_from_slice(self.embedding.row(tok as usize));
        }
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let trace = if l == 0 {
                layer.forward(&embedded, len)
            } else {
                layer.forward(&layers[l - 1].h, len)
            };
            layers.push(trace);
        }
        BackboneTrace { len, embedded, layers }
    }

    /// Backpropagates `dh_top` (`len × H`, gradient at the top layer's hidden
    /// states) down to the embedding rows of `inputs`.
    pub fn backward(&self, inputs: &[u32], trace: &BackboneTrace, dh_top: Vec<f64>, grad: &mut Backbone) {
        let len = trace.len;
        let mut dh = dh_top;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let layer_inputs = if l == 0 { &trace.embedded } else { &trace.layers[l - 1].h };
            let mut d_in = vec![0.0; len * layer.input_dim];
            layer.backward(layer_inputs, &trace.layers[l], &dh, &mut grad.layers[l], Some(&mut d_in));
            dh = d_in;
        }
        let e = self.embed_dim();
        for (t, &tok) in inputs.iter().enumerate() {
            axpy(1.0, &dh[t * e..(t + 1) * e], grad.embedding.row_mut(tok as usize));
        }
    }

    pub fn push_tensors<'a>(&'a self, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: "embedding".into(),
            shape: self.embedding.shape().to_vec(),
            data: &self.embedding.data,
        });
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(ParamRef {
                name: format!("layer{l}.w_x"),
                shape: layer.w_x.shape().to_vec(),
                data: &layer.w_x.data,
            });
            out.push(ParamRef {
                name: format!("layer{l}.w_h"),
                shape: layer.w_h.shape().to_vec(),
                data: &layer.w_h.data,
            });
            out.push(ParamRef {
                name: format!("layer{l}.bias"),
                shape: vec![layer.bias.len()],
                data: &layer.bias,
            });
        }
    }

    pub fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.embedding.data);
        for layer in &mut self.layers {
            out.push(&mut layer.w_x.data);
            out.push(&mut layer.w_h.data);
            out.push(&mut layer.bias);
        }
    }
}
