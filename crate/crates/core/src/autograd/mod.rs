//! Minimal reverse-mode differentiation over dense matrices, parameter
//! registry with optimization groups, and the Adam optimizer.

mod optim;
mod params;
mod tape;

pub use optim::Adam;
pub use params::{Gradients, Group, GroupMask, Param, ParamId, ParamRecord, ParamStore};
pub use tape::{sigmoid, softmax, Tape, Var};
