use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All trainable parameters in one flat vector, with Adam moments.
///
/// Keeping every tensor contiguous lets a rollout bind the whole store to a
/// tape with one call and read every gradient back by offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamStore {
    pub tensors: Vec<TensorInfo>,
    pub values: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Append a zero tensor and return its offset.
    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> usize {
        let offset = self.values.len();
        let n: usize = shape.iter().product();
        self.tensors.push(TensorInfo {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        });
        self.values.extend(core::iter::repeat(0.0).take(n));
        self.m.extend(core::iter::repeat(0.0).take(n));
        self.v.extend(core::iter::repeat(0.0).take(n));
        offset
    }

    /// Append a tensor drawn from `U(-bound, bound)`.
    pub fn add_uniform<G: Rng>(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut G) -> usize {
        let offset = self.add_zeros(name, shape);
        let n: usize = shape.iter().product();
        for v in &mut self.values[offset..offset + n] {
            *v = rng.gen_range(-bound..=bound);
        }
        offset
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.tensor(name).map(|t| &self.values[t.range()])
    }

    /// Zero every tensor whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for t in &self.tensors {
            if t.name.starts_with(prefix) {
                for v in &mut self.values[t.range()] {
                    *v = 0.0;
                }
            }
        }
    }

    /// Put every parameter on `tape` as a leaf, in storage order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        tape.vars(&self.values)
    }

    /// Values and optimizer moments are all finite.
    pub fn all_finite(&self) -> bool {
        self.values.iter().chain(&self.m).chain(&self.v).all(|v| v.is_finite())
    }

    pub fn reset_optimizer(&mut self) {
        self.m = vec![0.0; self.values.len()];
        self.v = vec![0.0; self.values.len()];
        self.step = 0;
    }
}
