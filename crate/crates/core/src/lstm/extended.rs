//! Double-double arithmetic and an independent reference forward pass.
//!
//! A central difference of an `f64` loss has an absolute noise floor near
//! `ulp(loss) / eps`, which swamps gradients below about `1e-6`. The gradient
//! check therefore evaluates the loss with roughly 32 significant digits; the
//! truncation error of the central difference is then the only error left.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::ModelConfig;
use crate::tokenize::PAD_ID;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Exact multiplication by `2^k`.
    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        // x = k ln2 + r, then exp(r) = exp(r / 2^6)^(2^6).
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from(k)).ldexp(-6);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=16 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
        }
        for _ in 0..6 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    /// Natural log by two Newton steps on `exp(y) = x` from the `f64` log.
    pub fn ln(self) -> Dd {
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn tanh(self) -> Dd {
        if self.hi < 0.0 {
            return -(-self).tanh();
        }
        let e = (self * Dd::from(-2.0)).exp();
        (Dd::ONE - e) / (Dd::ONE + e)
    }

    pub fn sigmoid(self) -> Dd {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(self) -> Dd {
        if self.hi > 0.0 {
            self + (Dd::ONE + (-self).exp()).ln()
        } else {
            (Dd::ONE + self.exp()).ln()
        }
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Dd {
        Dd { hi, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + -o
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(Dd::ZERO, |acc, (&x, &y)| acc + x * y)
}

/// Top-layer hidden states of the embedding + LSTM stack, evaluated from a
/// flat parameter list in checkpoint tensor order (embedding, then per
/// layer `w_x`, `w_h`, `bias`).
pub(crate) fn backbone_forward(params: &[Vec<Dd>], cfg: &ModelConfig, inputs: &[u32]) -> Vec<Vec<Dd>> {
    let (e, hd) = (cfg.embed_dim, cfg.hidden_dim);
    let mut xs: Vec<Vec<Dd>> = inputs
        .iter()
        .map(|&t| params[0][t as usize * e..(t as usize + 1) * e].to_vec())
        .collect();
    for l in 0..cfg.layers {
        let (w_x, w_h, bias) = (&params[1 + 3 * l], &params[2 + 3 * l], &params[3 + 3 * l]);
        let id = if l == 0 { e } else { hd };
        let mut h = vec![Dd::ZERO; hd];
        let mut c = vec![Dd::ZERO; hd];
        let mut out = Vec::with_capacity(xs.len());
        for x in &xs {
            let pre: Vec<Dd> = (0..4 * hd)
                .map(|r| bias[r] + dot(&w_x[r * id..(r + 1) * id], x) + dot(&w_h[r * hd..(r + 1) * hd], &h))
                .collect();
            for k in 0..hd {
                let i = pre[k].sigmoid();
                let f = pre[hd + k].sigmoid();
                let o = pre[2 * hd + k].sigmoid();
                let g = pre[3 * hd + k].tanh();
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            out.push(h.clone());
        }
        xs = out;
    }
    xs
}

/// Summed next-token negative log-likelihood of a sequence model.
pub(crate) fn sequence_nll(params: &[Vec<Dd>], cfg: &ModelConfig, tokens: &[u32]) -> Dd {
    let mut inputs = vec![PAD_ID];
    inputs.extend_from_slice(&tokens[..tokens.len() - 1]);
    let hs = backbone_forward(params, cfg, &inputs);
    let n = params.len();
    let (out_w, out_b) = (&params[n - 2], &params[n - 1]);
    let hd = cfg.hidden_dim;
    let mut loss = Dd::ZERO;
    for (h, &target) in hs.iter().zip(tokens) {
        let logits: Vec<Dd> = (0..cfg.m_vocab)
            .map(|v| out_b[v] + dot(&out_w[v * hd..(v + 1) * hd], h))
            .collect();
        let max = logits.iter().fold(Dd::from(f64::NEG_INFINITY), |m, &z| if z > m { z } else { m });
        let sum = logits.iter().fold(Dd::ZERO, |acc, &z| acc + (z - max).exp());
        loss = loss + max + sum.ln() - logits[target as usize];
    }
    loss
}

/// Logistic loss of the classifier read out at the last observed step.
pub(crate) fn classifier_loss(params: &[Vec<Dd>], cfg: &ModelConfig, tokens: &[u32], attack: bool) -> Dd {
    let hs = backbone_forward(params, cfg, tokens);
    let n = params.len();
    let z = params[n - 1][0] + dot(&params[n - 2], hs.last().expect("non-empty sequence"));
    if attack {
        z.softplus() - z
    } else {
        z.softplus()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Dd, b: Dd, tol: f64) -> bool {
        let d = (a - b).to_f64().abs();
        d <= tol * b.to_f64().abs().max(1.0)
    }

    #[test]
    fn known_constants() {
        // e to 32 digits.
        let e = Dd::ONE.exp();
        let expect = Dd {
            hi: std::f64::consts::E,
            lo: 1.445_646_891_729_250_2e-16,
        };
        assert!(close(e, expect, 1e-30), "{e:?}");
        assert!(close(Dd::from(2.0).ln(), LN2, 1e-31));
        assert_eq!(Dd::ONE.ln(), Dd::ZERO);
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = Dd::from(1.0) / Dd::from(3.0);
        assert!(close(a * Dd::from(3.0), Dd::ONE, 1e-31));
    }

    proptest! {
        #[test]
        fn exp_is_a_homomorphism(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let (a, b) = (Dd::from(a) / Dd::from(7.0), Dd::from(b));
            prop_assert!(close((a + b).exp(), a.exp() * b.exp(), 1e-28));
        }

        #[test]
        fn ln_inverts_exp(x in -30.0f64..30.0) {
            let x = Dd::from(x) / Dd::from(3.0);
            prop_assert!((x.exp().ln() - x).to_f64().abs() < 1e-28);
        }

        #[test]
        fn transcendental_agree_with_f64(x in -15.0f64..15.0) {
            let d = Dd::from(x);
            prop_assert!((d.tanh().to_f64() - x.tanh()).abs() < 1e-15);
            prop_assert!((d.sigmoid().to_f64() - crate::lstm::sigmoid(x)).abs() < 1e-15);
            prop_assert!((d.softplus().to_f64() - crate::lstm::softplus(x)).abs() < 1e-14);
        }
    }
}
