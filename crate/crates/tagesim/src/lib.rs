//! Simulator of a TAGE conditional branch predictor driven by an
//! M1-style branch history model, with a mistraining harness, the
//! closed-form success model, and experiment scenarios.

pub mod bhr;
pub mod experiments;
pub mod harness;
pub mod stats;
pub mod tage;
