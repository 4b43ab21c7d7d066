//! Abductive multi-target learning from diverse noisy label samples.
//!
//! Several annotators label the same instance sample, each with its own noise
//! regime. The pipeline extracts logical groundings from every labelling,
//! checks them against a knowledge base, revises them by abduction until they
//! are consistent, combines the revised labellings into multiple soft targets,
//! and trains a model against a weighted joint loss over all of them.
//!
//! Modules follow the pipeline order: [`model`] → [`knowledge`] →
//! [`reasoning`] → [`learner`], with [`synth`] producing the reference
//! segmentation task and [`eval`] scoring methods against ground truth.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod knowledge;
pub mod learner;
pub mod model;
pub mod reasoning;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
