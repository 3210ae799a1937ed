//! Perturbation-sensitivity harness for code LLMs.
//!
//! The pipeline: load benchmark samples ([`datamodel`]), build graded
//! perturbation ladders ([`perturbation`]), query a model at every level
//! ([`modelclient`]), score the outputs ([`grading`]), reduce each ladder to
//! its largest consecutive performance drop ([`sensitivity`]), then test
//! the resulting distributions for deviating benchmarks or models
//! ([`analysis`], [`stats`]) and write the report ([`report`]).

pub mod analysis;
pub mod datamodel;
pub mod grading;
pub mod modelclient;
pub mod perturbation;
pub mod report;
pub mod seed;
pub mod sensitivity;
pub mod stats;
pub mod synthetic;

#[cfg(feature = "testing")]
pub mod testing;
