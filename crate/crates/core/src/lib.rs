//! Feasibility-aware controller synthesis from Signal Temporal Logic.
//!
//! The crate builds time-varying high-order control barrier functions (HOCBFs)
//! from an STL task, places them as constraints of a differentiable quadratic
//! program at the end of a neural controller, and trains the networks that
//! produce the QP cost and the barrier hyperparameters by maximizing a smooth
//! robustness that also accounts for QP feasibility and input bounds.
//!
//! Layout:
//!
//! * [`stl`]: formulas, predicates, classical and exponential robustness.
//! * [`systems`]: control-affine models and analytic Lie derivatives.
//! * [`hocbf`]: predicate categories, `γ` functions, `ω` boxes, `ψ` rows, deletion.
//! * [`diffqp`]: dense QP solver with implicit (KKT) gradients.
//! * [`nn`]: reverse-mode tape, dense/LSTM layers, bounded heads, Adam.
//! * [`controller`]: InitNet / RefNet / multiplier net, rollouts, objective, training.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub(crate) mod linalg;
pub(crate) mod math;
pub mod real;

pub mod controller;
pub mod diffqp;
pub mod hocbf;
pub mod nn;
pub mod scenario;
pub mod stl;
pub mod systems;

pub use real::Real;
