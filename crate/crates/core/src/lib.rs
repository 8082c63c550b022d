//! Staged multi-omics classification.
//!
//! The pipeline trains one graph-convolutional classifier per omics view
//! over a cosine-similarity patient graph, fuses views through a
//! label-correlation head, quantifies per-sample uncertainty with an
//! ensemble of independently seeded trials, and routes each sample through
//! the cheapest view ladder whose uncertainty clears an optimized
//! threshold.
//!
//! Modules follow the data flow: [`numcore`] (matrices, gradients, Adam,
//! seeded RNG) → [`graph`] (similarity graphs) → [`model`] (classifiers and
//! fusion) → [`train`] (trials) → [`uncertainty`] (ensemble summaries) →
//! [`staging`] (threshold search and routing) → [`metrics`]. [`data`],
//! [`config`], [`pipeline`], and [`report`] handle ingestion,
//! configuration, orchestration, and emission.

pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod pipeline;
pub mod report;
pub mod staging;
pub mod train;
pub mod uncertainty;

pub use error::{Error, Result};
