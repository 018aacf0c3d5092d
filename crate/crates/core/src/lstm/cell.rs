//! One LSTM layer without peephole connections.
//!
//! Gate pre-activations are stacked in the order input, forget, output,
//! candidate: rows `[0, H)` of `w_x`, `w_h` and `bias` belong to the input
//! gate, `[H, 2H)` to the forget gate, `[2H, 3H)` to the output gate and
//! `[3H, 4H)` to the candidate `g`.
//!
//! ```text
//! i = σ(W_xi x + W_hi h + b_i)     f = σ(W_xf x + W_hf h + b_f)
//! o = σ(W_xo x + W_ho h + b_o)     g = tanh(W_xg x + W_hg h + b_g)
//! c' = f ⊙ c + i ⊙ g               h' = o ⊙ tanh(c')
//! ```

use rand::Rng;

use super::tensor::{axpy, dot, sigmoid, Matrix};

pub const GATES: [&str; 4] = ["i", "f", "o", "g"];

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayer {
            input_dim,
            hidden_dim,
            w_x: Matrix::zeros(4 * hidden_dim, input_dim),
            w_h: Matrix::zeros(4 * hidden_dim, hidden_dim),
            bias: vec![0.0; 4 * hidden_dim],
        }
    }

    /// Each tensor uniform in `±1/sqrt(fan_in)`; the bias uses the hidden width.
    pub fn random<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let bx = 1.0 / (input_dim as f64).sqrt();
        let bh = 1.0 / (hidden_dim as f64).sqrt();
        LstmLayer {
            input_dim,
            hidden_dim,
            w_x: Matrix::uniform(4 * hidden_dim, input_dim, bx, rng),
            w_h: Matrix::uniform(4 * hidden_dim, hidden_dim, bh, rng),
            bias: (0..4 * hidden_dim).map(|_| rng.gen_range(-bh..=bh)).collect(),
        }
    }

    /// Computes one step, writing activated gates `[i, f, o, g]` into
    /// `gates` (length 4H), the new cell into `c`, `tanh(c)` into `tanh_c`
    /// and the new hidden state into `h`.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let hd = self.hidden_dim;
        for r in 0..4 * hd {
            gates[r] = self.bias[r] + dot(self.w_x.row(r), x) + dot(self.w_h.row(r), h_prev);
        }
        for k in 0..hd {
            let i = sigmoid(gates[k]);
            let f = sigmoid(gates[hd + k]);
            let o = sigmoid(gates[2 * hd + k]);
            let g = gates[3 * hd + k].tanh();
            gates[k] = i;
            gates[hd + k] = f;
            gates[2 * hd + k] = o;
            gates[3 * hd + k] = g;
            c[k] = f * c_prev[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
    }

    /// Runs the layer over `len` steps of `inputs` (row-major, `len × input_dim`)
    /// from zero initial state.
    pub fn forward(&self, inputs: &[f64], len: usize) -> LayerTrace {
        let hd = self.hidden_dim;
        let id = self.input_dim;
        let mut trace = LayerTrace {
            hidden_dim: hd,
            gates: vec![0.0; len * 4 * hd],
            c: vec![0.0; len * hd],
            tanh_c: vec![0.0; len * hd],
            h: vec![0.0; len * hd],
        };
        let zeros = vec![0.0; hd];
        for t in 0..len {
            let (h_done, h_rest) = trace.h.split_at_mut(t * hd);
            let (c_done, c_rest) = trace.c.split_at_mut(t * hd);
            let h_prev = if t == 0 { &zeros[..] } else { &h_done[(t - 1) * hd..] };
            let c_prev = if t == 0 { &zeros[..] } else { &c_done[(t - 1) * hd..] };
            self.step(
                &inputs[t * id..(t + 1) * id],
                h_prev,
                c_prev,
                &mut trace.gates[t * 4 * hd..(t + 1) * 4 * hd],
                &mut c_rest[..hd],
                &mut trace.tanh_c[t * hd..(t + 1) * hd],
                &mut h_rest[..hd],
            );
        }
        trace
    }

    /// Backpropagation through time over a full trace.
    ///
    /// `dh` holds the loss gradient arriving at each step's hidden state from
    /// above (`len × H`). Parameter gradients are added into `grad`; when
    /// `d_input` is given, gradients w.r.t. the layer inputs are added into
    /// it (`len × input_dim`).
    pub fn backward(
        &self,
        inputs: &[f64],
        trace: &LayerTrace,
        dh: &[f64],
        grad: &mut LstmLayer,
        mut d_input: Option<&mut [f64]>,
    ) {
        let hd = self.hidden_dim;
        let id = self.input_dim;
        let len = trace.len();
        let zeros = vec![0.0; hd];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dz = vec![0.0; 4 * hd];
        for t in (0..len).rev() {
            let gates = &trace.gates[t * 4 * hd..(t + 1) * 4 * hd];
            let c_prev = if t == 0 { &zeros[..] } else { &trace.c[(t - 1) * hd..t * hd] };
            let h_prev = if t == 0 { &zeros[..] } else { &trace.h[(t - 1) * hd..t * hd] };
            for k in 0..hd {
                let (i, f, o, g) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
                let tc = trace.tanh_c[t * hd + k];
                let dh_k = dh[t * hd + k] + dh_next[k];
                let d_o = dh_k * tc;
                let dc = dc_next[k] + dh_k * o * (1.0 - tc * tc);
                dc_next[k] = dc * f;
                dz[k] = dc * g * i * (1.0 - i);
                dz[hd + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * hd + k] = d_o * o * (1.0 - o);
                dz[3 * hd + k] = dc * i * (1.0 - g * g);
            }
            let x = &inputs[t * id..(t + 1) * id];
            dh_next.fill(0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                axpy(d, x, grad.w_x.row_mut(r));
                axpy(d, h_prev, grad.w_h.row_mut(r));
                grad.bias[r] += d;
                axpy(d, self.w_h.row(r), &mut dh_next);
                if let Some(di) = d_input.as_deref_mut() {
                    axpy(d, self.w_x.row(r), &mut di[t * id..(t + 1) * id]);
                }
            }
        }
    }
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub hidden_dim: usize,
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LayerTrace {
    pub fn len(&self) -> usize {
        self.h.len() / self.hidden_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn h_at(&self, t: usize) -> &[f64] {
        &self.h[t * self.hidden_dim..(t + 1) * self.hidden_dim]
    }
}

/// Single cell step from an explicit state: returns `(h_t, c_t)`.
pub fn cell_forward(layer: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = layer.hidden_dim;
    assert_eq!(x.len(), layer.input_dim, "input width");
    assert_eq!(h_prev.len(), hd, "hidden width");
    assert_eq!(c_prev.len(), hd, "cell width");
    let mut gates = vec![0.0; 4 * hd];
    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    layer.step(x, h_prev, c_prev, &mut gates, &mut c, &mut tanh_c, &mut h);
    debug_assert!(h.iter().chain(&c).all(|v| v.is_finite()));
    (h, c)
}
