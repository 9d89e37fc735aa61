//! Fully connected networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector (per layer: weights row-major
//! `out × in`, then biases) so the optimiser, gradient checks and
//! serialisation all see the same layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::matrix::{axpy, dot};
use crate::tensor::rng::{standard_normal, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Silu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Multilayer perceptron; the activation is applied after every layer but
/// the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-sample forward record needed by [`Mlp::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// `acts[l]` is the input to layer `l`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Gaussian initialisation with variance `1/fan_in`, zero biases.
    pub fn new(widths: &[usize], activation: Activation, rng: &RngStream) -> Result<Self> {
        let mut net = Mlp::zeros(widths, activation)?;
        let mut g = rng.generator();
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let sd = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = sd * standard_normal(&mut g);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let n = Self::count_params(widths);
        Ok(Mlp {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; n],
        })
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(widths, activation)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                context: "network parameters",
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    fn count_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// `(weights, biases)` of layer `l`.
    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off: usize = Self::count_params(&self.widths[..=l]);
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    fn layer_offset(&self, l: usize) -> usize {
        Self::count_params(&self.widths[..=l])
    }

    /// Runs the network, keeping what backpropagation needs in `tape`.
    pub fn forward_tape(&self, input: &[f64], tape: &mut Tape) {
        assert_eq!(input.len(), self.input_dim(), "network input width");
        let layers = self.widths.len() - 1;
        tape.acts.resize_with(layers + 1, Vec::new);
        tape.pre.resize_with(layers, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let (before, after) = tape.acts.split_at_mut(l + 1);
            let a_in = &before[l];
            let pre = &mut tape.pre[l];
            pre.clear();
            pre.extend((0..fo).map(|o| b[o] + dot(&w[o * fi..(o + 1) * fi], a_in)));
            let a_out = &mut after[0];
            a_out.clear();
            if l + 1 < layers {
                a_out.extend(pre.iter().map(|&z| self.activation.apply(z)));
            } else {
                a_out.extend_from_slice(pre);
            }
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape);
        tape.acts.pop().unwrap()
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`, and returns
    /// `∂L/∂input` if requested.
    pub fn backward(&self, tape: &mut Tape, grad_output: &[f64], grad: &mut [f64], want_input: bool) -> Option<Vec<f64>> {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(grad_output.len(), self.output_dim());
        let layers = self.widths.len() - 1;
        let mut delta = std::mem::take(&mut tape.delta);
        let mut prev = std::mem::take(&mut tape.delta_prev);
        delta.clear();
        delta.extend_from_slice(grad_output);
        for l in (0..layers).rev() {
            if l + 1 < layers {
                for (dv, &z) in delta.iter_mut().zip(&tape.pre[l]) {
                    *dv *= self.activation.derivative(z);
                }
            }
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let off = self.layer_offset(l);
            let a_in = &tape.acts[l];
            {
                let (gw, gb) = grad[off..off + fi * fo + fo].split_at_mut(fi * fo);
                for o in 0..fo {
                    let dv = delta[o];
                    if dv != 0.0 {
                        axpy(dv, a_in, &mut gw[o * fi..(o + 1) * fi]);
                    }
                    gb[o] += dv;
                }
            }
            if l > 0 || want_input {
                let (w, _) = self.layer(l);
                prev.clear();
                prev.resize(fi, 0.0);
                for o in 0..fo {
                    let dv = delta[o];
                    if dv != 0.0 {
                        axpy(dv, &w[o * fi..(o + 1) * fi], &mut prev);
                    }
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
        let out = if want_input { Some(delta.clone()) } else { None };
        tape.delta = delta;
        tape.delta_prev = prev;
        out
    }
}

/// Adaptive-moment optimiser state.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(net: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        net.forward(x).iter().zip(target).map(|(o, t)| (o - t).powi(2)).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for act in [Activation::Silu, Activation::Tanh] {
            let net = Mlp::new(&[3, 5, 4, 2], act, &RngStream::new(1)).unwrap();
            let x = [0.3, -1.2, 0.8];
            let target = [0.5, -0.25];
            let mut tape = Tape::default();
            net.forward_tape(&x, &mut tape);
            let out = tape.output().to_vec();
            let g_out: Vec<f64> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
            let mut grad = vec![0.0; net.num_params()];
            let gin = net.backward(&mut tape, &g_out, &mut grad, true).unwrap();
            let h = 1e-6;
            for i in 0..net.num_params() {
                let mut p = net.clone();
                p.params_mut()[i] += h;
                let fp = loss(&p, &x, &target);
                p.params_mut()[i] -= 2.0 * h;
                let fm = loss(&p, &x, &target);
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
            }
            for j in 0..3 {
                let mut xp = x;
                xp[j] += h;
                let mut xm = x;
                xm[j] -= h;
                let fd = (loss(&net, &xp, &target) - loss(&net, &xm, &target)) / (2.0 * h);
                assert!((fd - gin[j]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn adam_fits_a_line() {
        let mut net = Mlp::new(&[1, 8, 1], Activation::Tanh, &RngStream::new(2)).unwrap();
        let mut opt = Adam::new(net.num_params());
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
        let mut tape = Tape::default();
        for _ in 0..3000 {
            let mut grad = vec![0.0; net.num_params()];
            for &x in &xs {
                net.forward_tape(&[x], &mut tape);
                let e = tape.output()[0] - (0.5 * x + 0.1);
                net.backward(&mut tape, &[2.0 * e / xs.len() as f64], &mut grad, false);
            }
            opt.step(net.params_mut(), &grad, 1e-2);
        }
        let mse: f64 = xs.iter().map(|&x| (net.forward(&[x])[0] - 0.5 * x - 0.1).powi(2)).sum::<f64>() / 20.0;
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn rejects_degenerate_widths() {
        assert!(Mlp::zeros(&[3], Activation::Silu).is_err());
        assert!(Mlp::zeros(&[3, 0, 1], Activation::Silu).is_err());
        assert!(Mlp::from_params(&[2, 1], Activation::Silu, vec![0.0; 2]).is_err());
    }
}
