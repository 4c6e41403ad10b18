//! Peer influence in prepaid churn.
//!
//! The crate turns raw call detail records into monthly usage, a friendship
//! graph and churn labels, assembles a survival panel and a cross-section,
//! and estimates peer effects with a shared-frailty Cox model and a
//! generalized propensity score dose-response. A synthetic world generator
//! with known ground truth backs the validation suite.

pub mod calendar;
pub mod churn;
pub mod cox;
pub mod error;
pub mod exec;
pub mod gps;
pub mod graph;
pub mod ingest;
pub mod panel;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Execution;
