//! Class-incremental point-cloud recognition with category-guided geometric
//! reasoning, critic-supervised attention and fairness compensation.

pub mod attention;
pub mod autograd;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod fairness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod reasoning;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};
