//! Shared checks for the integration tests and the acceptance target.
#![allow(dead_code)]

pub mod benchmark;
pub mod closed_form;
pub mod fairness;
pub mod oracles;
pub mod reference;
