//! Decomposition-based explanation of image classifiers.
//!
//! Instead of a heatmap, an explanation here is an additive split of the
//! input image into a class-distinct part and a class-agnostic part,
//! `x = distinct + agnostic`, produced by a bank of style-transfer
//! generator branches trained against a frozen classifier. The crate also
//! ships synthetic benchmark datasets with ground truth, a conversion from
//! ordinary heatmaps into decompositions, and an evaluation bench
//! (accuracy-vs-beta AUC, deletion faithfulness, seed stability,
//! classifier matching).
//!
//! Modules follow the pipeline order: [`core`] holds the domain types and
//! scalar math, [`datasets`] generates or loads labeled data, [`models`]
//! builds the networks, [`losses`] the training objectives, [`trainer`]
//! the alpha-blended adversarial loop, [`explain`] the inference-time
//! explanation operators, and [`evalbench`] the quantitative protocols.

pub mod core;
pub mod datasets;
pub mod error;
pub mod evalbench;
pub mod explain;
pub mod losses;
pub mod models;
pub mod nn;
pub mod trainer;

pub use error::{DxaiError, Result};
