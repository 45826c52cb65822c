//! Herd-behaviour theory for investment agents: the two-agent market model,
//! its fixed-point solver, questionnaire elicitation, SFT dataset synthesis,
//! alignment metrics, and density analysis.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod elicitation;
pub mod error;
pub mod ingest;
pub mod market;
pub mod metrics;
pub mod percent;
pub mod quad;
pub mod rng;
pub mod solver;
pub mod template;

pub use error::{Error, Result};
