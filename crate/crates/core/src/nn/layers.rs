use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Var;
use crate::math;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softplus,
    Tanh,
}

impl Activation {
    pub fn apply<R: Real>(self, x: R) -> R {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.relu(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Softplus => x.softplus(),
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    w: usize,
    b: usize,
    inputs: usize,
    outputs: usize,
}

/// Fully connected network stored in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// Add the tensors of a network with layer widths `sizes` (input first),
    /// initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn new<G: Rng>(store: &mut ParamStore, prefix: &str, sizes: &[usize], hidden: Activation, output: Activation, rng: &mut G) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / math::sqrt(w[0] as f64);
                let wo = store.add_uniform(&format!("{prefix}.l{i}.w"), &[w[1], w[0]], bound, rng);
                let bo = store.add_uniform(&format!("{prefix}.l{i}.b"), &[w[1]], bound, rng);
                Dense {
                    w: wo,
                    b: bo,
                    inputs: w[0],
                    outputs: w[1],
                }
            })
            .collect();
        Self { layers, hidden, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Forward pass on parameters bound with [`ParamStore::bind`].
    pub fn forward<'t>(&self, params: &[Var<'t>], input: &[Var<'t>]) -> Vec<Var<'t>> {
        assert_eq!(input.len(), self.input_dim(), "mlp input shape mismatch");
        let tape = input[0].tape();
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let w = &params[l.w..l.w + l.inputs * l.outputs];
            let b = &params[l.b..l.b + l.outputs];
            let y = tape.affine(w, b, &x);
            let act = if i == last { self.output } else { self.hidden };
            x = match act {
                Activation::Identity => y,
                _ => y.into_iter().map(|v| act.apply(v)).collect(),
            };
        }
        x
    }

    /// Plain `f64` forward pass reading the store directly.
    pub fn forward_f64(&self, store: &ParamStore, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_dim(), "mlp input shape mismatch");
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let act = if i == last { self.output } else { self.hidden };
            x = (0..l.outputs)
                .map(|r| {
                    let row = &store.values[l.w + r * l.inputs..l.w + (r + 1) * l.inputs];
                    let s = row.iter().zip(&x).fold(store.values[l.b + r], |acc, (w, v)| acc + w * v);
                    act.apply(s)
                })
                .collect();
        }
        x
    }

    /// Offsets of the last layer's weight and bias tensors.
    pub fn last_layer(&self) -> (usize, usize, usize, usize) {
        let l = &self.layers[self.layers.len() - 1];
        (l.w, l.b, l.inputs, l.outputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LstmLayer {
    /// `4H × (in + H)` weights over `[x; h]`, gate order `i, f, g, o`.
    w: usize,
    b: usize,
    inputs: usize,
}

/// Stacked LSTM followed by a linear readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    layers: Vec<LstmLayer>,
    pub hidden: usize,
    readout: Mlp,
}

/// Hidden and cell vectors of every layer.
#[derive(Debug, Clone)]
pub struct LstmState<'t> {
    pub h: Vec<Vec<Var<'t>>>,
    pub c: Vec<Vec<Var<'t>>>,
}

impl Lstm {
    pub fn new<G: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, layers: usize, output: usize, rng: &mut G) -> Self {
        let bound = 1.0 / math::sqrt(hidden as f64);
        let layers = (0..layers)
            .map(|i| {
                let inputs = if i == 0 { input } else { hidden };
                let w = store.add_uniform(&format!("{prefix}.lstm{i}.w"), &[4 * hidden, inputs + hidden], bound, rng);
                let b = store.add_uniform(&format!("{prefix}.lstm{i}.b"), &[4 * hidden], bound, rng);
                LstmLayer { w, b, inputs }
            })
            .collect();
        let readout = Mlp::new(
            store,
            &format!("{prefix}.readout"),
            &[hidden, output],
            Activation::Identity,
            Activation::Identity,
            rng,
        );
        Self { layers, hidden, readout }
    }

    pub fn output_dim(&self) -> usize {
        self.readout.output_dim()
    }

    pub fn zero_state<'t>(&self, like: Var<'t>) -> LstmState<'t> {
        let z = like.tape().constant(0.0);
        LstmState {
            h: self.layers.iter().map(|_| alloc::vec![z; self.hidden]).collect(),
            c: self.layers.iter().map(|_| alloc::vec![z; self.hidden]).collect(),
        }
    }

    /// One time step through every layer; returns the new state and the readout.
    pub fn step<'t>(&self, params: &[Var<'t>], state: &LstmState<'t>, input: &[Var<'t>]) -> (LstmState<'t>, Vec<Var<'t>>) {
        assert_eq!(input.len(), self.layers[0].inputs, "lstm input shape mismatch");
        let tape = input[0].tape();
        let hd = self.hidden;
        let mut x = input.to_vec();
        let mut next = LstmState {
            h: Vec::with_capacity(self.layers.len()),
            c: Vec::with_capacity(self.layers.len()),
        };
        for (li, l) in self.layers.iter().enumerate() {
            let cols = l.inputs + hd;
            let mut xh = x.clone();
            xh.extend_from_slice(&state.h[li]);
            let z = tape.affine(&params[l.w..l.w + 4 * hd * cols], &params[l.b..l.b + 4 * hd], &xh);
            let mut h = Vec::with_capacity(hd);
            let mut c = Vec::with_capacity(hd);
            for k in 0..hd {
                let i = z[k].sigmoid();
                let f = z[hd + k].sigmoid();
                let g = z[2 * hd + k].tanh();
                let o = z[3 * hd + k].sigmoid();
                let ck = f * state.c[li][k] + i * g;
                h.push(o * ck.tanh());
                c.push(ck);
            }
            x = h.clone();
            next.h.push(h);
            next.c.push(c);
        }
        let out = self.readout.forward(params, &x);
        (next, out)
    }

    /// Parameter offset of the first layer's weight tensor.
    pub fn first_weight(&self) -> usize {
        self.layers[0].w
    }
}

/// Map an unconstrained value into `(lo, hi)`, `(lo, ∞)` or `(-∞, hi)`.
///
/// The result is clamped into the closed range as well so that saturated
/// sigmoids and large softplus arguments cannot step outside by rounding.
pub fn bounded_head<R: Real>(raw: R, lo: Option<R>, hi: Option<R>) -> R {
    match (lo, hi) {
        (Some(lo), Some(hi)) => {
            debug_assert!(lo.value() <= hi.value(), "bounded_head: lo > hi");
            let y = lo + (hi - lo) * raw.sigmoid();
            y.max(lo).min(hi)
        }
        (Some(lo), None) => (lo + raw.softplus()).max(lo),
        (None, Some(hi)) => (hi - raw.softplus()).min(hi),
        (None, None) => raw,
    }
}
