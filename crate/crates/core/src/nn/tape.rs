//! Reverse-mode autodiff on an append-only tape.
//!
//! Scalars are nodes holding their value and the local partials towards their
//! parents. Vector-valued operations whose Jacobian is cheap to apply but
//! expensive to store per scalar (dense layers, the QP layer) are recorded as
//! blocks: their outputs are contiguous nodes and the whole block is
//! back-propagated when the sweep reaches its last output.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::math;
use crate::real::Real;

/// Vector-Jacobian product of a block recorded with [`Tape::custom_block`].
pub trait BlockOp {
    /// Accumulate `out_adj^T · ∂out/∂in` into `in_adj`.
    ///
    /// `inputs` are the values of the block inputs in recording order and
    /// `in_adj` has the same length, zero-initialized.
    fn vjp(&self, inputs: &[f64], out_adj: &[f64], in_adj: &mut [f64]);
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Unary { a: u32, da: f64 },
    Binary { a: u32, b: u32, da: f64, db: f64 },
    BlockOut { block: u32, last: bool },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    value: f64,
    op: Op,
}

enum Block {
    /// `y = W x + b` with `W` (rows × cols, row-major) and `b` contiguous on the tape.
    Affine {
        w: u32,
        b: u32,
        rows: u32,
        cols: u32,
        x: Vec<u32>,
        first_out: u32,
    },
    Custom {
        inputs: Vec<u32>,
        first_out: u32,
        n_out: u32,
        op: Box<dyn BlockOp>,
    },
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    blocks: Vec<Block>,
}

/// Append-only computation record. One rollout owns one tape.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &inner.nodes.len())
            .field("blocks", &inner.blocks.len())
            .finish()
    }
}

/// Handle to a scalar on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

/// Adjoints of every node after a reverse sweep.
#[derive(Clone, Debug)]
pub struct Gradient {
    adj: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    pub fn wrt_slice(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(*v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: f64, op: Op) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node { value, op });
        Var { tape: self, idx }
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// Contiguous run of independent variables.
    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        let start = inner.nodes.len() as u32;
        inner
            .nodes
            .extend(values.iter().map(|&value| Node { value, op: Op::Leaf }));
        drop(inner);
        (0..values.len() as u32)
            .map(|i| Var {
                tape: self,
                idx: start + i,
            })
            .collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    fn value_of(&self, idx: u32) -> f64 {
        self.inner.borrow().nodes[idx as usize].value
    }

    fn unary(&self, a: Var<'_>, value: f64, da: f64) -> Var<'_> {
        self.push(value, Op::Unary { a: a.idx, da })
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, value: f64, da: f64, db: f64) -> Var<'_> {
        self.push(
            value,
            Op::Binary {
                a: a.idx,
                b: b.idx,
                da,
                db,
            },
        )
    }

    /// Dense affine map `W x + b`.
    ///
    /// `w` must be `rows * cols` contiguous tape variables in row-major order
    /// and `b` must be `rows` contiguous variables.
    pub fn affine<'t>(&'t self, w: &[Var<'t>], b: &[Var<'t>], x: &[Var<'t>]) -> Vec<Var<'t>> {
        let rows = b.len();
        let cols = x.len();
        assert_eq!(w.len(), rows * cols, "affine: weight shape mismatch");
        assert!(rows > 0);
        debug_assert!(is_contiguous(w) && is_contiguous(b));
        let mut inner = self.inner.borrow_mut();
        let xv: Vec<f64> = x.iter().map(|v| inner.nodes[v.idx as usize].value).collect();
        let w0 = w[0].idx as usize;
        let b0 = b[0].idx as usize;
        let first_out = inner.nodes.len() as u32;
        let block = inner.blocks.len() as u32;
        for r in 0..rows {
            let mut acc = inner.nodes[b0 + r].value;
            let row = &inner.nodes[w0 + r * cols..w0 + (r + 1) * cols];
            for (wn, xc) in row.iter().zip(&xv) {
                acc += wn.value * xc;
            }
            inner.nodes.push(Node {
                value: acc,
                op: Op::BlockOut {
                    block,
                    last: r + 1 == rows,
                },
            });
        }
        inner.blocks.push(Block::Affine {
            w: w[0].idx,
            b: b[0].idx,
            rows: rows as u32,
            cols: cols as u32,
            x: x.iter().map(|v| v.idx).collect(),
            first_out,
        });
        drop(inner);
        (0..rows as u32)
            .map(|i| Var {
                tape: self,
                idx: first_out + i,
            })
            .collect()
    }

    /// Record a block with precomputed outputs and a custom VJP.
    pub fn custom_block<'t>(
        &'t self,
        inputs: &[Var<'t>],
        outputs: &[f64],
        op: Box<dyn BlockOp>,
    ) -> Vec<Var<'t>> {
        assert!(!outputs.is_empty());
        let mut inner = self.inner.borrow_mut();
        let first_out = inner.nodes.len() as u32;
        let block = inner.blocks.len() as u32;
        let n = outputs.len();
        for (i, &value) in outputs.iter().enumerate() {
            inner.nodes.push(Node {
                value,
                op: Op::BlockOut {
                    block,
                    last: i + 1 == n,
                },
            });
        }
        inner.blocks.push(Block::Custom {
            inputs: inputs.iter().map(|v| v.idx).collect(),
            first_out,
            n_out: n as u32,
            op,
        });
        drop(inner);
        (0..n as u32)
            .map(|i| Var {
                tape: self,
                idx: first_out + i,
            })
            .collect()
    }

    /// Reverse sweep seeded with `d output / d output = 1`.
    pub fn gradient(&self, output: Var<'_>) -> Gradient {
        let inner = self.inner.borrow();
        let n = inner.nodes.len();
        let mut adj = vec![0.0; n];
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let node = inner.nodes[i];
            match node.op {
                Op::Leaf => {}
                Op::Unary { a, da } => {
                    let g = adj[i];
                    if g != 0.0 {
                        adj[a as usize] += g * da;
                    }
                }
                Op::Binary { a, b, da, db } => {
                    let g = adj[i];
                    if g != 0.0 {
                        adj[a as usize] += g * da;
                        adj[b as usize] += g * db;
                    }
                }
                Op::BlockOut { block, last } => {
                    if last {
                        backprop_block(&inner, &inner.blocks[block as usize], &mut adj);
                    }
                }
            }
        }
        Gradient { adj }
    }
}

fn is_contiguous(vs: &[Var<'_>]) -> bool {
    vs.windows(2).all(|w| w[1].idx == w[0].idx + 1)
}

fn backprop_block(inner: &Inner, block: &Block, adj: &mut [f64]) {
    match block {
        Block::Affine {
            w,
            b,
            rows,
            cols,
            x,
            first_out,
        } => {
            let (rows, cols) = (*rows as usize, *cols as usize);
            let (w, b, first_out) = (*w as usize, *b as usize, *first_out as usize);
            let g: Vec<f64> = adj[first_out..first_out + rows].to_vec();
            if g.iter().all(|&v| v == 0.0) {
                return;
            }
            let xv: Vec<f64> = x.iter().map(|&i| inner.nodes[i as usize].value).collect();
            let mut gx = vec![0.0; cols];
            for r in 0..rows {
                let gr = g[r];
                if gr == 0.0 {
                    continue;
                }
                adj[b + r] += gr;
                let row = w + r * cols;
                for c in 0..cols {
                    adj[row + c] += gr * xv[c];
                    gx[c] += gr * inner.nodes[row + c].value;
                }
            }
            for (c, &xi) in x.iter().enumerate() {
                adj[xi as usize] += gx[c];
            }
        }
        Block::Custom {
            inputs,
            first_out,
            n_out,
            op,
        } => {
            let (first_out, n_out) = (*first_out as usize, *n_out as usize);
            let g: Vec<f64> = adj[first_out..first_out + n_out].to_vec();
            if g.iter().all(|&v| v == 0.0) {
                return;
            }
            let vals: Vec<f64> = inputs.iter().map(|&i| inner.nodes[i as usize].value).collect();
            let mut in_adj = vec![0.0; inputs.len()];
            op.vjp(&vals, &g, &mut in_adj);
            for (k, &i) in inputs.iter().enumerate() {
                adj[i as usize] += in_adj[k];
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn index(self) -> usize {
        self.idx as usize
    }

    fn check_same(self, other: Var<'t>) {
        debug_assert!(
            core::ptr::eq(self.tape, other.tape),
            "variables from different tapes"
        );
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same(rhs);
        let v = self.value() + rhs.value();
        self.tape.binary(self, rhs, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same(rhs);
        let v = self.value() - rhs.value();
        self.tape.binary(self, rhs, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same(rhs);
        let (a, b) = (self.value(), rhs.value());
        self.tape.binary(self, rhs, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same(rhs);
        let (a, b) = (self.value(), rhs.value());
        let q = a / b;
        self.tape.binary(self, rhs, q, 1.0 / b, -q / b)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self, -self.value(), -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self, self.value() + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self, self.value() - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self, self.value() * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self, self.value() / rhs, 1.0 / rhs)
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn value(self) -> f64 {
        self.tape.value_of(self.idx)
    }

    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn exp(self) -> Self {
        let e = math::exp(self.value());
        self.tape.unary(self, e, e)
    }

    fn ln(self) -> Self {
        let x = self.value();
        self.tape.unary(self, math::ln(x), 1.0 / x)
    }

    fn sqrt(self) -> Self {
        let s = math::sqrt(self.value());
        self.tape.unary(self, s, 0.5 / s)
    }

    fn powf(self, p: f64) -> Self {
        let x = self.value();
        self.tape
            .unary(self, math::powf(x, p), p * math::powf(x, p - 1.0))
    }

    fn sin(self) -> Self {
        let x = self.value();
        self.tape.unary(self, math::sin(x), math::cos(x))
    }

    fn cos(self) -> Self {
        let x = self.value();
        self.tape.unary(self, math::cos(x), -math::sin(x))
    }

    fn tanh(self) -> Self {
        let t = math::tanh(self.value());
        self.tape.unary(self, t, 1.0 - t * t)
    }

    fn sigmoid(self) -> Self {
        let s = math::sigmoid(self.value());
        self.tape.unary(self, s, s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        let x = self.value();
        self.tape.unary(self, math::softplus(x), math::sigmoid(x))
    }

    fn relu(self) -> Self {
        let x = self.value();
        if x > 0.0 {
            self
        } else {
            self.tape.unary(self, 0.0, 0.0)
        }
    }

    fn clamp_value(self, lo: f64, hi: f64) -> Self {
        let x = self.value();
        if x < lo {
            self.tape.unary(self, lo, 0.0)
        } else if x > hi {
            self.tape.unary(self, hi, 0.0)
        } else {
            self
        }
    }

    fn recip(self) -> Self {
        let x = self.value();
        self.tape.unary(self, 1.0 / x, -1.0 / (x * x))
    }

    fn rsub(self, c: f64) -> Self {
        self.tape.unary(self, c - self.value(), -1.0)
    }

    fn square(self) -> Self {
        let x = self.value();
        self.tape.unary(self, x * x, 2.0 * x)
    }
}
