//! Reverse-mode tape and the small networks built on it.

mod adam;
mod layers;
mod params;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamError};
pub use layers::{bounded_head, Activation, Lstm, LstmState, Mlp};
pub use params::{ParamStore, TensorInfo};
pub use tape::{BlockOp, Gradient, Tape, Var};
