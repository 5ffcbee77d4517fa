//! Privacy auditing for knowledge distillation.
//!
//! This crate trains small teacher/student model pairs, runs
//! likelihood-ratio membership-inference attacks against them, and
//! packages the experiment recipes used to study how much membership
//! signal survives distillation. Everything is deterministic: a master
//! seed fans out to per-component `ChaCha8` streams, so any run can be
//! reproduced bit for bit.
//!
//! Module map:
//! - [`nn`]: the feed-forward models and their training loop.
//! - [`data`]: synthetic mixtures, CSV loading, splits, and membership
//!   plans.
//! - [`distill`]: teacher -> query-set -> student pipelines.
//! - [`shadow`]: shadow-model batches and the on-disk logit store.
//! - [`lira`]: Gaussian likelihood-ratio scoring and the student-query
//!   attack.
//! - [`metrics`]: ROC/AUC, per-example accuracy, rank correlation, and
//!   the structural-break test.
//! - [`experiments`]: end-to-end experiment recipes and report output.

pub mod data;
pub mod distill;
pub mod error;
pub mod experiments;
pub mod lira;
pub mod mat;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod shadow;

pub use error::{Error, Result};
pub use mat::Matrix;
